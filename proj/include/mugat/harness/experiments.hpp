#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/harness/evaluate.hpp"
#include "mugat/harness/trainer.hpp"

namespace mugat::harness {

/// One trained model, evaluated on the test split.
struct ExperimentResult {
    std::string label;  // "baseline", "mugat" or "L2_N4" style
    std::size_t seed_index = 0;
    model::ModelConfig model;
    TrainConfig train;
    metrics::MetricsTable table;
    HiddenFieldStats hidden;
    double seconds = 0.0;
    std::filesystem::path checkpoint;
};

/// Seeds for repetition k of an experiment: init and data order both move,
/// everything else is shared.
inline TrainConfig seeded(TrainConfig tc, std::size_t k)
{
    tc.init_seed = derive_seed(tc.init_seed, 1000 + k);
    tc.data_order_seed = derive_seed(tc.data_order_seed, 1000 + k);
    return tc;
}

/// A checkpoint at `path` from a finished run with exactly this setup.
inline bool completed_run(const std::filesystem::path& path, const corpus::Corpus& c, const model::ModelConfig& mc,
                          const TrainConfig& tc, Stage stage)
{
    if (!std::filesystem::exists(path) || !std::filesystem::exists(model::sidecar_path(path))) return false;
    try {
        const auto meta = nlohmann::json::parse(model::read_bytes(model::sidecar_path(path)));
        const std::size_t want = stage == Stage::pretrain ? tc.pretrain_epochs : tc.adapter_epochs;
        return meta.at("stage").get<std::string>() == to_string(stage) && meta.at("epochs_done").get<std::size_t>() == want &&
               meta.at("train").get<TrainConfig>() == tc && meta.at("model").get<model::ModelConfig>() == mc &&
               meta.at("corpus") == nlohmann::json(corpus::corpus_config_json(c));
    } catch (const std::exception&) {
        return false;
    }
}

struct ExperimentOptions {
    bool reuse = true;  // skip training when a finished checkpoint with the same setup exists
    std::size_t eval_workers = 0;
};

template <typename T>
std::filesystem::path ensure_pretrained(const corpus::Corpus& c, const RunConfig& rc, const std::filesystem::path& path,
                                        const TrainCallbacks& cb, const ExperimentOptions& opt)
{
    model::ModelConfig mc = rc.model;
    mc.n_latents = 0;
    if (opt.reuse && completed_run(path, c, mc, rc.train, Stage::pretrain)) {
        if (cb.log) cb.log("reusing " + path.string());
        return path;
    }
    pretrain_single_page<T>(c, rc.model, rc.train, path, cb);
    return path;
}

template <typename T>
ExperimentResult run_adapter(const model::Checkpoint& base, const corpus::Corpus& c, const std::string& label, std::size_t seed_index,
                             const model::ModelConfig& mc, const TrainConfig& tc, const std::filesystem::path& path,
                             const TrainCallbacks& cb, const ExperimentOptions& opt)
{
    ExperimentResult r{label, seed_index, mc, tc, {}, {}, 0.0, path};
    if (opt.reuse && completed_run(path, c, mc, tc, Stage::adapter)) {
        if (cb.log) cb.log("reusing " + path.string());
    } else {
        r.seconds = train_adapter<T>(base, c, mc, tc, path, cb).seconds;
    }
    const auto m = model::model_from_checkpoint<T>(model::load_checkpoint(path));
    const auto eval = evaluate(m, c, corpus::Split::test, opt.eval_workers);
    r.table = eval.table;
    r.hidden = eval.hidden;
    if (cb.log) {
        cb.log(label + " seed " + std::to_string(seed_index) + ": ed " + metrics::format_fixed(r.table.overall().ed) +
               ", hidden-field accuracy " + metrics::format_fixed(r.hidden.accuracy()));
    }
    return r;
}

/// Per-scenario means of several tables with the same rows.
inline metrics::MetricsTable mean_table(const std::vector<metrics::MetricsTable>& tables)
{
    if (tables.empty()) throw std::invalid_argument("mean_table: no tables");
    metrics::MetricsTable out = tables.front();
    for (auto& row : out.rows) {
        row.ed = row.bleu = row.meteor = row.precision = row.recall = 0.0;
        for (const auto& t : tables) {
            const auto* r = t.find(row.label);
            if (!r) throw std::invalid_argument("mean_table: row " + row.label + " missing");
            row.ed += r->ed;
            row.bleu += r->bleu;
            row.meteor += r->meteor;
            row.precision += r->precision;
            row.recall += r->recall;
        }
        const double n = static_cast<double>(tables.size());
        row.ed /= n;
        row.bleu /= n;
        row.meteor /= n;
        row.precision /= n;
        row.recall /= n;
    }
    return out;
}

struct ContextReport {
    std::vector<ExperimentResult> runs;
    metrics::MetricsTable baseline_mean;
    metrics::MetricsTable mugat_mean;
    double baseline_hidden = 0.0;  // mean over seeds
    double mugat_hidden = 0.0;
    double chance = 0.0;
    std::size_t continuation_rows = 0;
    double seconds = 0.0;
};

inline std::string context_csv(const ContextReport& r)
{
    std::string out;
    for (const auto& n : metrics::report_notes()) out += "# " + n + "\n";
    out += "# hidden_field_accuracy: carried-row dates predicted exactly, test continuation pages read with their real neighbours; chance " +
           metrics::format_fixed(r.chance) + "\n";
    out += "model,seed,scenario,count,ed,bleu,meteor,precision,recall,ed_x100,hidden_field_accuracy\n";
    auto rows = [&](const std::string& model, const std::string& seed, const metrics::MetricsTable& t, double hidden) {
        for (const auto& row : t.rows) {
            out += model + "," + seed + "," + row.label + "," + std::to_string(row.count) + "," + metrics::format_fixed(row.ed) + "," +
                   metrics::format_fixed(row.bleu) + "," + metrics::format_fixed(row.meteor) + "," + metrics::format_fixed(row.precision) +
                   "," + metrics::format_fixed(row.recall) + "," + metrics::format_fixed(100.0 * row.ed, 2) + "," +
                   metrics::format_fixed(hidden) + "\n";
        }
    };
    for (const auto& run : r.runs) rows(run.label, std::to_string(run.seed_index), run.table, run.hidden.accuracy());
    rows("baseline", "mean", r.baseline_mean, r.baseline_hidden);
    rows("mugat", "mean", r.mugat_mean, r.mugat_hidden);
    return out;
}

inline nlohmann::ordered_json to_json(const ExperimentResult& r)
{
    return nlohmann::ordered_json{{"label", r.label},
                                  {"seed_index", r.seed_index},
                                  {"model", nlohmann::json(r.model)},
                                  {"train", nlohmann::json(r.train)},
                                  {"metrics", metrics::to_json(r.table)},
                                  {"hidden_field", to_json(r.hidden)},
                                  {"train_seconds", r.seconds},
                                  {"checkpoint", r.checkpoint.string()}};
}

inline nlohmann::ordered_json to_json(const ContextReport& r)
{
    nlohmann::ordered_json j;
    j["runs"] = nlohmann::ordered_json::array();
    for (const auto& run : r.runs) j["runs"].push_back(to_json(run));
    j["baseline_mean"] = metrics::to_json(r.baseline_mean);
    j["mugat_mean"] = metrics::to_json(r.mugat_mean);
    j["baseline_hidden_field_accuracy"] = r.baseline_hidden;
    j["mugat_hidden_field_accuracy"] = r.mugat_hidden;
    j["chance"] = r.chance;
    j["continuation_rows"] = r.continuation_rows;
    j["seconds"] = r.seconds;
    return j;
}

/// Pretrains once, then for each seed trains the single-page baseline (N = 0)
/// and the context model under the same budget and seeds, and evaluates both
/// on the test split. Writes checkpoints and context.{csv,json} to `out`.
template <typename T>
ContextReport context_experiment(const corpus::Corpus& c, const RunConfig& rc, std::size_t seeds, const std::filesystem::path& out,
                                 const TrainCallbacks& cb = {}, const ExperimentOptions& opt = {})
{
    if (seeds == 0) throw std::invalid_argument("context_experiment: need at least one seed");
    std::size_t carried = 0;
    for (const auto& d : c.manifest.test) carried += corpus::carried_rows(d.markup).size();
    if (carried == 0) throw corpus::DataError("test split has no continuation rows");
    if (!rc.model.has_adapter()) throw std::invalid_argument("context_experiment: model config needs N > 0");

    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out);
    const auto base = model::load_checkpoint(ensure_pretrained<T>(c, rc, out / "base.ckpt", cb, opt));
    ContextReport report;
    report.chance = 1.0 / static_cast<double>(c.config.k_date);
    report.continuation_rows = carried;
    std::vector<metrics::MetricsTable> bt, mt;
    model::ModelConfig baseline = rc.model;
    baseline.n_latents = 0;
    for (std::size_t k = 0; k < seeds; ++k) {
        const TrainConfig tc = seeded(rc.train, k);
        const std::string sfx = "_s" + std::to_string(k) + ".ckpt";
        report.runs.push_back(run_adapter<T>(base, c, "baseline", k, baseline, tc, out / ("baseline" + sfx), cb, opt));
        bt.push_back(report.runs.back().table);
        report.baseline_hidden += report.runs.back().hidden.accuracy() / static_cast<double>(seeds);
        report.runs.push_back(run_adapter<T>(base, c, "mugat", k, rc.model, tc, out / ("mugat" + sfx), cb, opt));
        mt.push_back(report.runs.back().table);
        report.mugat_hidden += report.runs.back().hidden.accuracy() / static_cast<double>(seeds);
    }
    report.baseline_mean = mean_table(bt);
    report.mugat_mean = mean_table(mt);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_report(out / "context", context_csv(report), to_json(report));
    return report;
}

struct GridRow {
    std::size_t layers = 0;   // L
    std::size_t latents = 0;  // N
    ExperimentResult result;
};

inline std::string grid_csv(const std::vector<GridRow>& rows)
{
    std::string out;
    for (const auto& n : metrics::report_notes()) out += "# " + n + "\n";
    out += "L,N,ed,bleu,meteor,precision,recall,ed_x100,hidden_field_accuracy\n";
    for (const auto& r : rows) {
        const auto& o = r.result.table.overall();
        out += std::to_string(r.layers) + "," + std::to_string(r.latents) + "," + metrics::format_fixed(o.ed) + "," +
               metrics::format_fixed(o.bleu) + "," + metrics::format_fixed(o.meteor) + "," + metrics::format_fixed(o.precision) + "," +
               metrics::format_fixed(o.recall) + "," + metrics::format_fixed(100.0 * o.ed, 2) + "," +
               metrics::format_fixed(r.result.hidden.accuracy()) + "\n";
    }
    return out;
}

/// One adapter per (L, N) from the same base checkpoint and seeds; writes
/// L{L}_N{N}.ckpt files and ablation.{csv,json} to `out`.
template <typename T>
std::vector<GridRow> ablate_grid(const corpus::Corpus& c, const model::Checkpoint& base, const RunConfig& rc,
                                 const std::vector<std::size_t>& l_values, const std::vector<std::size_t>& n_values,
                                 const std::filesystem::path& out, const TrainCallbacks& cb = {}, const ExperimentOptions& opt = {})
{
    std::filesystem::create_directories(out);
    std::vector<GridRow> rows;
    for (const auto l : l_values) {
        for (const auto n : n_values) {
            model::ModelConfig mc = rc.model;
            mc.adapter_layers = l;
            mc.n_latents = n;
            const std::string label = "L" + std::to_string(l) + "_N" + std::to_string(n);
            rows.push_back(GridRow{l, n, run_adapter<T>(base, c, label, 0, mc, rc.train, out / (label + ".ckpt"), cb, opt)});
        }
    }
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) j.push_back(to_json(r.result));
    write_report(out / "ablation", grid_csv(rows), nlohmann::ordered_json{{"rows", j}});
    return rows;
}

}  // namespace mugat::harness
