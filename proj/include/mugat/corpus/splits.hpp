#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugat/numerics/rng.hpp"
#include "mugat/scenario.hpp"

namespace mugat::corpus {

enum class Split : std::uint8_t { train, val, test };

inline std::string_view to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view name)
{
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

class SplitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A page as it exists in the document, before any context masking.
struct PageRef {
    std::size_t doc_id = 0;
    std::size_t page_index = 0;
    bool has_prev = false;
    bool has_next = false;
    std::string markup;
    std::string pgm_path;
};

/// One training/evaluation sample: a page plus which neighbours the model is
/// allowed to see. Masking only touches these flags, never the pixels.
struct SampleDescriptor {
    std::size_t doc_id = 0;
    std::size_t page_index = 0;
    bool prev_available = false;
    bool next_available = false;
    Split split = Split::train;
    std::string markup;
    std::string pgm_path;

    Scenario scenario() const { return scenario_of(prev_available, next_available); }
    friend bool operator==(const SampleDescriptor&, const SampleDescriptor&) = default;
};

struct SplitManifest {
    std::vector<SampleDescriptor> train;
    std::vector<SampleDescriptor> val;
    std::vector<SampleDescriptor> test;

    const std::vector<SampleDescriptor>& get(Split s) const
    {
        return s == Split::train ? train : (s == Split::val ? val : test);
    }
    std::vector<SampleDescriptor>& get(Split s) { return s == Split::train ? train : (s == Split::val ? val : test); }
};

/// Largest-remainder apportionment of `total` into integer counts that follow
/// `quotas`; every count is within 1 of total * quota.
template <std::size_t K>
std::array<std::size_t, K> apportion(std::size_t total, const std::array<double, K>& quotas)
{
    std::array<std::size_t, K> counts{};
    std::array<double, K> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < K; ++i) {
        const double exact = static_cast<double>(total) * quotas[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainder[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    std::array<std::size_t, K> order{};
    for (std::size_t i = 0; i < K; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % K]];
    return counts;
}

namespace detail {

/// Masks context availability for the pages of one split so that scenario
/// counts match `counts` exactly. Pages are drawn at random among those whose
/// real neighbours allow the scenario.
inline std::vector<SampleDescriptor> assign_scenarios(std::vector<const PageRef*> pages, Split split,
                                                      const std::array<std::size_t, 4>& counts, std::mt19937_64& rng)
{
    std::vector<const PageRef*> interior, first, last, single;
    for (const PageRef* p : pages) {
        if (p->has_prev && p->has_next) interior.push_back(p);
        else if (p->has_next) first.push_back(p);
        else if (p->has_prev) last.push_back(p);
        else single.push_back(p);
    }
    deterministic_shuffle(interior, rng);
    deterministic_shuffle(first, rng);
    deterministic_shuffle(last, rng);

    const std::size_t n_co = counts[0], n_pc = counts[1], n_cn = counts[2], n_full = counts[3];
    std::vector<std::string> shortfall;
    if (interior.size() < n_full) {
        shortfall.push_back("full needs " + std::to_string(n_full) + " pages with both neighbours, have " + std::to_string(interior.size()));
    }
    const std::size_t spare_interior = interior.size() >= n_full ? interior.size() - n_full : 0;
    if (last.size() + first.size() + spare_interior < n_pc + n_cn || last.size() + spare_interior < n_pc ||
        first.size() + spare_interior < n_cn) {
        shortfall.push_back("prev_curr/curr_next need " + std::to_string(n_pc) + "/" + std::to_string(n_cn) +
                            " pages, have " + std::to_string(last.size()) + " last, " + std::to_string(first.size()) +
                            " first and " + std::to_string(spare_interior) + " spare interior pages");
    }
    if (!shortfall.empty()) {
        std::string msg = "too few pages in split " + std::string(to_string(split)) + " to satisfy scenario quotas:";
        for (const auto& s : shortfall) msg += "\n  " + s;
        throw SplitError(msg);
    }

    std::vector<SampleDescriptor> out;
    auto emit = [&](const PageRef* p, Scenario s) {
        out.push_back(SampleDescriptor{p->doc_id, p->page_index, has_prev(s), has_next(s), split, p->markup, p->pgm_path});
    };

    std::size_t next_interior = 0;
    for (; next_interior < n_full; ++next_interior) emit(interior[next_interior], Scenario::full);
    std::vector<const PageRef*> spare(interior.begin() + static_cast<std::ptrdiff_t>(n_full), interior.end());

    // prev_curr draws from last pages and spare interior pages, leaving enough
    // interior pages for curr_next.
    const std::size_t keep_for_cn = n_cn > first.size() ? n_cn - first.size() : 0;
    const std::size_t interior_budget = spare.size() - keep_for_cn;
    std::vector<const PageRef*> pool(last.begin(), last.end());
    pool.insert(pool.end(), spare.begin(), spare.end());
    deterministic_shuffle(pool, rng);
    std::set<const PageRef*> used;
    std::size_t taken = 0, interior_used = 0;
    for (const PageRef* p : pool) {
        if (taken == n_pc) break;
        const bool is_interior = p->has_next;
        if (is_interior && interior_used == interior_budget) continue;
        emit(p, Scenario::prev_curr);
        used.insert(p);
        ++taken;
        if (is_interior) ++interior_used;
    }
    if (taken < n_pc) throw SplitError("internal: prev_curr quota unmet in split " + std::string(to_string(split)));

    pool.assign(first.begin(), first.end());
    for (const PageRef* p : spare) {
        if (!used.count(p)) pool.push_back(p);
    }
    deterministic_shuffle(pool, rng);
    taken = 0;
    for (const PageRef* p : pool) {
        if (taken == n_cn) break;
        emit(p, Scenario::curr_next);
        used.insert(p);
        ++taken;
    }
    if (taken < n_cn) throw SplitError("internal: curr_next quota unmet in split " + std::string(to_string(split)));

    std::size_t n_rest = 0;
    for (const auto* group : {&first, &last, &single, &spare}) {
        for (const PageRef* p : *group) {
            if (!used.count(p)) {
                emit(p, Scenario::curr_only);
                ++n_rest;
            }
        }
    }
    if (n_rest != n_co) throw SplitError("internal: curr_only count mismatch in split " + std::string(to_string(split)));

    std::sort(out.begin(), out.end(), [](const SampleDescriptor& a, const SampleDescriptor& b) {
        return a.doc_id != b.doc_id ? a.doc_id < b.doc_id : a.page_index < b.page_index;
    });
    return out;
}

}  // namespace detail

/// Document-level train/val/test partition followed by per-split context
/// masking to the scenario quotas (order: curr_only, prev_curr, curr_next, full).
inline SplitManifest make_splits(const std::vector<PageRef>& pages, const std::array<double, 3>& ratios,
                                 const std::array<double, 4>& scenario_quotas, std::uint64_t seed)
{
    double qsum = 0;
    for (double q : scenario_quotas) qsum += q;
    if (std::abs(qsum - 1.0) > 1e-9) throw SplitError("scenario quotas must sum to 1");

    std::vector<std::size_t> docs;
    std::map<std::size_t, std::vector<const PageRef*>> by_doc;
    for (const PageRef& p : pages) {
        if (!by_doc.count(p.doc_id)) docs.push_back(p.doc_id);
        by_doc[p.doc_id].push_back(&p);
    }
    std::sort(docs.begin(), docs.end());
    std::mt19937_64 rng(derive_seed(seed, 0x5B1175));
    deterministic_shuffle(docs, rng);

    const auto n_docs = docs.size();
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n_docs) * ratios[0]));
    const auto n_val = std::min(n_docs - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n_docs) * ratios[1])));

    SplitManifest manifest;
    for (Split split : {Split::train, Split::val, Split::test}) {
        const std::size_t lo = split == Split::train ? 0 : (split == Split::val ? n_train : n_train + n_val);
        const std::size_t hi = split == Split::train ? n_train : (split == Split::val ? n_train + n_val : n_docs);
        std::vector<std::size_t> split_docs(docs.begin() + static_cast<std::ptrdiff_t>(lo), docs.begin() + static_cast<std::ptrdiff_t>(hi));
        std::sort(split_docs.begin(), split_docs.end());
        std::vector<const PageRef*> split_pages;
        for (auto d : split_docs) {
            for (const PageRef* p : by_doc[d]) split_pages.push_back(p);
        }
        if (split_pages.empty()) continue;
        const auto counts = apportion(split_pages.size(), scenario_quotas);
        manifest.get(split) = detail::assign_scenarios(split_pages, split, counts, rng);
    }
    return manifest;
}

}  // namespace mugat::corpus
