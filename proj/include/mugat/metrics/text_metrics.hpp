#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mugat::metrics {

struct EditDistance {
    std::size_t raw = 0;
    double normalized = 0.0;
};

/// Levenshtein distance with unit costs, normalised by the longer string.
inline EditDistance edit_distance(std::string_view pred, std::string_view gt)
{
    const std::size_t n = pred.size(), m = gt.size();
    if (n == 0 && m == 0) return {0, 0.0};
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (pred[i - 1] == gt[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return {prev[m], static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m))};
}

inline std::vector<std::string> whitespace_tokens(std::string_view text)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

struct BleuScore {
    double value = 0.0;
    bool empty_prediction = false;
    std::vector<double> precisions;  // clipped n-gram precision per order
    double brevity_penalty = 0.0;
};

/// Sentence-level BLEU without smoothing: geometric mean of clipped n-gram
/// precisions for n = 1..max_n times the brevity penalty. Any zero precision
/// gives 0.
inline BleuScore bleu(const std::vector<std::string>& pred, const std::vector<std::string>& gt, std::size_t max_n = 4)
{
    if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
    BleuScore out;
    if (pred.empty()) {
        out.empty_prediction = true;
        out.precisions.assign(max_n, 0.0);
        return out;
    }
    out.brevity_penalty = std::exp(std::min(0.0, 1.0 - static_cast<double>(gt.size()) / static_cast<double>(pred.size())));
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 1; n <= max_n; ++n) {
        if (pred.size() < n) {
            out.precisions.push_back(0.0);
            zero = true;
            continue;
        }
        std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
        for (std::size_t i = 0; i + n <= gt.size(); ++i) ++ref_counts[{gt.begin() + static_cast<std::ptrdiff_t>(i), gt.begin() + static_cast<std::ptrdiff_t>(i + n)}];
        for (std::size_t i = 0; i + n <= pred.size(); ++i) ++hyp_counts[{pred.begin() + static_cast<std::ptrdiff_t>(i), pred.begin() + static_cast<std::ptrdiff_t>(i + n)}];
        std::size_t clipped = 0;
        for (const auto& [gram, count] : hyp_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) clipped += std::min(count, it->second);
        }
        const double p = static_cast<double>(clipped) / static_cast<double>(pred.size() - n + 1);
        out.precisions.push_back(p);
        if (p == 0.0) zero = true;
        else log_sum += std::log(p);
    }
    out.value = zero ? 0.0 : out.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
    return out;
}

struct MeteorScore {
    double value = 0.0;
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    bool exhaustive = true;  // false when the alignment search hit its node budget
};

namespace detail {

/// Finds an alignment between equal tokens with the maximum number of matches
/// and, among those, the fewest chunks (maximal runs contiguous in both
/// sequences). Depth-first branch and bound over prediction positions,
/// seeded with a greedy longest-run alignment.
class ChunkMinimizer {
public:
    ChunkMinimizer(const std::vector<std::string>& pred, const std::vector<std::string>& gt, std::size_t budget)
      : pred_(pred), gt_(gt), budget_(budget), link_(pred.size(), -1), used_(gt.size(), false)
    {
        std::map<std::string, std::size_t> cp, cg;
        for (const auto& w : pred) ++cp[w];
        for (const auto& w : gt) ++cg[w];
        for (const auto& [w, c] : cp) {
            auto it = cg.find(w);
            const std::size_t k = it == cg.end() ? 0 : std::min(c, it->second);
            need_[w] = k;
            matches_ += k;
        }
        // Occurrences of each word at or after position i in pred.
        remaining_.assign(pred.size() + 1, {});
        for (std::size_t i = pred.size(); i-- > 0;) {
            remaining_[i] = remaining_[i + 1];
            ++remaining_[i][pred[i]];
        }
    }

    std::size_t matches() const { return matches_; }
    bool exhaustive() const { return nodes_ <= budget_; }

    std::size_t solve()
    {
        if (matches_ == 0) return 0;
        best_ = greedy_chunks();
        std::map<std::string, std::size_t> matched;
        search(0, 0, matched);
        return best_;
    }

private:
    std::size_t greedy_chunks() const
    {
        std::vector<int> link(pred_.size(), -1);
        std::vector<bool> used(gt_.size(), false);
        std::map<std::string, std::size_t> matched;
        // Repeatedly take the longest run of unlinked equal tokens.
        while (true) {
            std::size_t best_len = 0, bi = 0, bj = 0;
            for (std::size_t i = 0; i < pred_.size(); ++i) {
                for (std::size_t j = 0; j < gt_.size(); ++j) {
                    std::size_t len = 0;
                    std::map<std::string, std::size_t> extra;
                    while (i + len < pred_.size() && j + len < gt_.size() && link[i + len] < 0 && !used[j + len] &&
                           pred_[i + len] == gt_[j + len] && matched[pred_[i + len]] + extra[pred_[i + len]] < need_.at(pred_[i + len])) {
                        ++extra[pred_[i + len]];
                        ++len;
                    }
                    if (len > best_len) best_len = len, bi = i, bj = j;
                }
            }
            if (best_len == 0) break;
            for (std::size_t k = 0; k < best_len; ++k) {
                link[bi + k] = static_cast<int>(bj + k);
                used[bj + k] = true;
                ++matched[pred_[bi + k]];
            }
        }
        return count_chunks(link);
    }

    static std::size_t count_chunks(const std::vector<int>& link)
    {
        std::size_t chunks = 0;
        for (std::size_t i = 0; i < link.size(); ++i) {
            if (link[i] < 0) continue;
            if (i == 0 || link[i - 1] < 0 || link[i - 1] + 1 != link[i]) ++chunks;
        }
        return chunks;
    }

    void search(std::size_t i, std::size_t chunks, std::map<std::string, std::size_t>& matched)
    {
        if (++nodes_ > budget_ || chunks >= best_) return;
        if (i == pred_.size()) {
            best_ = chunks;
            return;
        }
        const std::string& w = pred_[i];
        const std::size_t need = need_.count(w) ? need_.at(w) : 0;
        const std::size_t have = matched[w];
        if (have < need) {
            // Prefer the gt position continuing the current chunk.
            std::vector<std::size_t> options;
            const int prev = i > 0 ? link_[i - 1] : -1;
            if (prev >= 0 && static_cast<std::size_t>(prev + 1) < gt_.size() && !used_[static_cast<std::size_t>(prev + 1)] &&
                gt_[static_cast<std::size_t>(prev + 1)] == w) {
                options.push_back(static_cast<std::size_t>(prev + 1));
            }
            for (std::size_t j = 0; j < gt_.size(); ++j) {
                if (!used_[j] && gt_[j] == w && (options.empty() || options.front() != j)) options.push_back(j);
            }
            for (const std::size_t j : options) {
                const bool extends = prev >= 0 && static_cast<std::size_t>(prev + 1) == j;
                link_[i] = static_cast<int>(j);
                used_[j] = true;
                ++matched[w];
                search(i + 1, chunks + (extends ? 0 : 1), matched);
                --matched[w];
                used_[j] = false;
                link_[i] = -1;
            }
        }
        // Leaving position i unmatched is allowed only if later occurrences can
        // still reach the required count.
        const std::size_t still_needed = need > have ? need - have : 0;
        const auto later = remaining_[i + 1].find(w);
        if (still_needed <= (later == remaining_[i + 1].end() ? 0 : later->second)) search(i + 1, chunks, matched);
    }

    const std::vector<std::string>& pred_;
    const std::vector<std::string>& gt_;
    std::size_t budget_;
    std::vector<int> link_;
    std::vector<bool> used_;
    std::map<std::string, std::size_t> need_;
    std::vector<std::map<std::string, std::size_t>> remaining_;
    std::size_t matches_ = 0;
    std::size_t best_ = 0;
    std::size_t nodes_ = 0;
};

}  // namespace detail

/// METEOR restricted to exact unigram matches:
/// F = 10PR / (R + 9P), penalty = 0.5 (chunks / m)^3, score = F (1 - penalty).
inline MeteorScore meteor(const std::vector<std::string>& pred, const std::vector<std::string>& gt, std::size_t search_budget = 100000)
{
    MeteorScore out;
    detail::ChunkMinimizer solver(pred, gt, search_budget);
    out.matches = solver.matches();
    if (out.matches == 0) return out;
    out.chunks = solver.solve();
    out.exhaustive = solver.exhaustive();
    const double m = static_cast<double>(out.matches);
    out.precision = m / static_cast<double>(pred.size());
    out.recall = m / static_cast<double>(gt.size());
    out.fmean = 10.0 * out.precision * out.recall / (out.recall + 9.0 * out.precision);
    out.penalty = 0.5 * std::pow(static_cast<double>(out.chunks) / m, 3.0);
    out.value = out.fmean * (1.0 - out.penalty);
    return out;
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// Precision and recall between the sets of whitespace-separated words.
/// No case folding.
inline PrecisionRecall word_set_pr(std::string_view pred, std::string_view gt)
{
    const auto pw = whitespace_tokens(pred);
    const auto gw = whitespace_tokens(gt);
    const std::set<std::string> ps(pw.begin(), pw.end());
    const std::set<std::string> gs(gw.begin(), gw.end());
    std::size_t common = 0;
    for (const auto& w : ps) common += gs.count(w);
    PrecisionRecall out;
    if (!ps.empty()) out.precision = static_cast<double>(common) / static_cast<double>(ps.size());
    if (!gs.empty()) out.recall = static_cast<double>(common) / static_cast<double>(gs.size());
    return out;
}

}  // namespace mugat::metrics
