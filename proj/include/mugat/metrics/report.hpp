#pragma once

#include <array>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/metrics/text_metrics.hpp"
#include "mugat/scenario.hpp"

namespace mugat::metrics {

struct MetricsRecord {
    double ed = 0.0;
    double bleu = 0.0;
    double meteor = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    Scenario scenario = Scenario::curr_only;
};

/// All five scores for one prediction. ED works on characters; BLEU and
/// METEOR on whitespace tokens.
inline MetricsRecord score_sample(const std::string& pred, const std::string& gt, Scenario scenario)
{
    const auto pt = whitespace_tokens(pred);
    const auto gt_tokens = whitespace_tokens(gt);
    const auto pr = word_set_pr(pred, gt);
    return MetricsRecord{edit_distance(pred, gt).normalized, bleu(pt, gt_tokens).value, meteor(pt, gt_tokens).value,
                         pr.precision, pr.recall, scenario};
}

struct AggregateRow {
    std::string label;  // scenario name or "overall"
    std::size_t count = 0;
    double ed = 0.0;
    double bleu = 0.0;
    double meteor = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MetricsTable {
    std::vector<AggregateRow> rows;  // scenarios present, in enum order, then "overall"

    const AggregateRow* find(std::string_view label) const
    {
        for (const auto& r : rows) {
            if (r.label == label) return &r;
        }
        return nullptr;
    }
    const AggregateRow& overall() const { return rows.back(); }
};

/// Per-scenario arithmetic means plus an overall row.
inline MetricsTable aggregate(const std::vector<MetricsRecord>& records)
{
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    auto accumulate = [](AggregateRow& row, const MetricsRecord& r) {
        ++row.count;
        row.ed += r.ed;
        row.bleu += r.bleu;
        row.meteor += r.meteor;
        row.precision += r.precision;
        row.recall += r.recall;
    };
    auto finish = [](AggregateRow& row) {
        const double n = static_cast<double>(row.count);
        row.ed /= n;
        row.bleu /= n;
        row.meteor /= n;
        row.precision /= n;
        row.recall /= n;
    };
    std::array<AggregateRow, 4> per;
    AggregateRow all{"overall"};
    for (const auto& r : records) {
        accumulate(per[static_cast<std::size_t>(r.scenario)], r);
        accumulate(all, r);
    }
    MetricsTable table;
    for (Scenario s : kScenarios) {
        AggregateRow row = per[static_cast<std::size_t>(s)];
        if (row.count == 0) continue;
        row.label = std::string(to_string(s));
        finish(row);
        table.rows.push_back(row);
    }
    finish(all);
    table.rows.push_back(all);
    return table;
}

inline const std::vector<std::string>& report_notes()
{
    static const std::vector<std::string> notes{
        "meteor: exact unigram matching only (no stemming or synonym modules)",
        "precision/recall: word sets built without case folding",
        "ed: Levenshtein distance normalised by the longer string; ed_x100 is the same value scaled by 100",
        "bleu: sentence-level, no smoothing, averaged over samples",
    };
    return notes;
}

inline std::string format_fixed(double v, int decimals = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string to_csv(const MetricsTable& t)
{
    std::string out;
    for (const auto& n : report_notes()) out += "# " + n + "\n";
    out += "scenario,count,ed,bleu,meteor,precision,recall,ed_x100\n";
    for (const auto& r : t.rows) {
        out += r.label + "," + std::to_string(r.count) + "," + format_fixed(r.ed) + "," + format_fixed(r.bleu) + "," +
               format_fixed(r.meteor) + "," + format_fixed(r.precision) + "," + format_fixed(r.recall) + "," +
               format_fixed(100.0 * r.ed, 2) + "\n";
    }
    return out;
}

inline nlohmann::ordered_json to_json(const MetricsTable& t)
{
    nlohmann::ordered_json j;
    j["notes"] = report_notes();
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) {
        j["rows"].push_back(nlohmann::ordered_json{{"scenario", r.label},
                                                   {"count", r.count},
                                                   {"ed", r.ed},
                                                   {"ed_x100", 100.0 * r.ed},
                                                   {"bleu", r.bleu},
                                                   {"meteor", r.meteor},
                                                   {"precision", r.precision},
                                                   {"recall", r.recall}});
    }
    return j;
}

inline MetricsTable table_from_json(const nlohmann::json& j)
{
    MetricsTable t;
    for (const auto& r : j.at("rows")) {
        t.rows.push_back(AggregateRow{r.at("scenario").get<std::string>(), r.at("count").get<std::size_t>(), r.at("ed").get<double>(),
                                      r.at("bleu").get<double>(), r.at("meteor").get<double>(), r.at("precision").get<double>(),
                                      r.at("recall").get<double>()});
    }
    return t;
}

}  // namespace mugat::metrics
