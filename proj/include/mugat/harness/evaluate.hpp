#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/corpus/corpus.hpp"
#include "mugat/corpus/markup.hpp"
#include "mugat/harness/trainer.hpp"
#include "mugat/metrics/report.hpp"

namespace mugat::harness {

struct Prediction {
    std::string text;
    bool truncated = false;
};

/// Produces the markup for a sample given which neighbours it may use.
using Predictor = std::function<Prediction(const corpus::SampleDescriptor&, bool use_prev, bool use_next)>;

/// Carried rows whose date was predicted exactly, over the continuation
/// pages of a split read with all of their real neighbours.
struct HiddenFieldStats {
    std::size_t rows = 0;
    std::size_t correct = 0;
    double chance = 0.0;  // 1 / K_date

    double accuracy() const { return rows == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows); }
};

struct SampleResult {
    corpus::SampleDescriptor sample;
    Prediction prediction;
    metrics::MetricsRecord scores;
};

struct EvalResult {
    corpus::Split split = corpus::Split::test;
    std::vector<SampleResult> samples;
    metrics::MetricsTable table;
    HiddenFieldStats hidden;
    std::size_t truncated = 0;
};

/// Number of carried rows of `gt` whose date cell in `pred` (carry mark
/// stripped) matches.
inline std::pair<std::size_t, std::size_t> hidden_field_matches(const std::string& pred, const std::string& gt)
{
    const auto rows = corpus::carried_rows(gt);
    const auto truth = corpus::markup_dates(gt);
    const auto guess = corpus::markup_dates(pred);
    std::size_t correct = 0;
    for (const auto r : rows) {
        if (r < guess.size() && !truth[r].empty() && guess[r] == truth[r]) ++correct;
    }
    return {rows.size(), correct};
}

inline bool real_prev(const corpus::Corpus& c, const corpus::SampleDescriptor& s)
{
    return s.page_index > 0 && c.contains(s.doc_id, s.page_index - 1);
}
inline bool real_next(const corpus::Corpus& c, const corpus::SampleDescriptor& s) { return c.contains(s.doc_id, s.page_index + 1); }

inline EvalResult evaluate_with(const corpus::Corpus& c, corpus::Split split, const Predictor& predict, std::size_t workers)
{
    const auto& descs = c.manifest.get(split);
    if (descs.empty()) throw corpus::DataError("split " + std::string(corpus::to_string(split)) + " is empty");
    EvalResult r;
    r.split = split;
    r.samples.resize(descs.size());
    std::vector<std::pair<std::size_t, std::size_t>> hidden(descs.size());
    parallel_for(descs.size(), resolve_workers(workers), [&](std::size_t i) {
        const auto& d = descs[i];
        Prediction p = predict(d, d.prev_available, d.next_available);
        r.samples[i] = SampleResult{d, p, metrics::score_sample(p.text, d.markup, d.scenario())};
        if (corpus::carried_rows(d.markup).empty()) return;
        const bool prev = real_prev(c, d), next = real_next(c, d);
        if (prev != d.prev_available || next != d.next_available) p = predict(d, prev, next);
        hidden[i] = hidden_field_matches(p.text, d.markup);
    });
    std::vector<metrics::MetricsRecord> records;
    for (const auto& s : r.samples) {
        records.push_back(s.scores);
        if (s.prediction.truncated) ++r.truncated;
    }
    for (const auto& [rows, correct] : hidden) {
        r.hidden.rows += rows;
        r.hidden.correct += correct;
    }
    r.hidden.chance = 1.0 / static_cast<double>(c.config.k_date);
    r.table = metrics::aggregate(records);
    return r;
}

/// Predictor that returns the ground truth; used to check the report path.
inline Predictor ground_truth_predictor()
{
    return [](const corpus::SampleDescriptor& d, bool, bool) { return Prediction{d.markup, false}; };
}

/// Greedy parses of every sample of `split`, scored per scenario.
template <typename T>
EvalResult evaluate(const model::MugatModel<T>& m, const corpus::Corpus& c, corpus::Split split, std::size_t workers = 0)
{
    workers = resolve_workers(workers);
    const EmbeddingCache<T> cache(m, c, needed_pages(c.manifest.get(split), true, &c), workers);
    const corpus::Tokenizer tok;
    Predictor predict = [&](const corpus::SampleDescriptor& d, bool use_prev, bool use_next) {
        const auto& curr = cache.get(d.doc_id, d.page_index);
        const auto& prev = cache.neighbour(d.doc_id, d.page_index - 1, use_prev);
        const auto& next = cache.neighbour(d.doc_id, d.page_index + 1, use_next);
        const auto parsed = m.parse_embeddings(prev, curr, next, tok);
        return Prediction{parsed.text, parsed.truncated};
    };
    return evaluate_with(c, split, predict, workers);
}

inline nlohmann::ordered_json to_json(const HiddenFieldStats& h)
{
    return nlohmann::ordered_json{{"rows", h.rows}, {"correct", h.correct}, {"accuracy", h.accuracy()}, {"chance", h.chance}};
}

inline nlohmann::ordered_json to_json(const EvalResult& r, bool with_samples = true)
{
    nlohmann::ordered_json j;
    j["split"] = std::string(corpus::to_string(r.split));
    j["metrics"] = metrics::to_json(r.table);
    j["hidden_field"] = to_json(r.hidden);
    j["truncated"] = r.truncated;
    if (with_samples) {
        j["samples"] = nlohmann::ordered_json::array();
        for (const auto& s : r.samples) {
            j["samples"].push_back(nlohmann::ordered_json{{"doc_id", s.sample.doc_id},
                                                          {"page_index", s.sample.page_index},
                                                          {"scenario", std::string(to_string(s.sample.scenario()))},
                                                          {"prediction", s.prediction.text},
                                                          {"truncated", s.prediction.truncated},
                                                          {"ed", s.scores.ed},
                                                          {"bleu", s.scores.bleu}});
        }
    }
    return j;
}

/// `<stem>.csv` and `<stem>.json` next to each other; an extension on
/// `path` is replaced.
inline void write_report(const std::filesystem::path& path, const std::string& csv, const nlohmann::ordered_json& json)
{
    auto stem = path;
    stem.replace_extension();
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    corpus::write_file_atomic(stem.string() + ".csv", csv);
    corpus::write_file_atomic(stem.string() + ".json", json.dump(2) + "\n");
}

inline void write_eval_report(const std::filesystem::path& path, const EvalResult& r)
{
    write_report(path, metrics::to_csv(r.table), to_json(r));
}

}  // namespace mugat::harness
