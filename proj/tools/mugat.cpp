// Command-line front end: corpus generation, training, evaluation and the
// two experiments. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mugat/corpus/corpus.hpp"
#include "mugat/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace mugat;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const fs::path& path)
{
    try {
        return nlohmann::json::parse(corpus::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw corpus::DataError("cannot parse " + path.string() + ": " + e.what());
    }
}

harness::RunConfig load_run_config(const std::string& path)
{
    if (path.empty()) return {};
    return harness::run_config_from_json(read_json(path));
}

harness::TrainCallbacks stderr_log()
{
    harness::TrainCallbacks cb;
    cb.log = [](const std::string& line) { std::cerr << line << std::endl; };
    return cb;
}

bool checkpoint_is_f32(const model::Checkpoint& c) { return c.meta.value("dtype", std::string("f32")) == "f32"; }

template <typename T>
void eval_checkpoint(const model::Checkpoint& ckpt, const corpus::Corpus& c, corpus::Split split, const fs::path& report)
{
    const auto m = model::model_from_checkpoint<T>(ckpt);
    const auto r = harness::evaluate(m, c, split);
    harness::write_eval_report(report, r);
    std::cout << metrics::to_csv(r.table);
    std::cout << "hidden_field_accuracy," << metrics::format_fixed(r.hidden.accuracy()) << " (" << r.hidden.correct << "/"
              << r.hidden.rows << ", chance " << metrics::format_fixed(r.hidden.chance) << ")\n";
}

std::vector<std::size_t> parse_list(const std::string& text)
{
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (item.empty()) throw UsageError("empty entry in list '" + text + "'");
        out.push_back(std::stoul(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-page context document parser at toy scale"};
    app.require_subcommand(1);

    std::string config_path, out, corpus_dir, base_path, ckpt_path, split_name = "test", report_path, resume_path;
    std::uint64_t seed = 0;
    std::size_t seeds = 3;
    bool use_double = false, fresh = false;
    std::string l_values = "2,4", n_values = "2,4,8";

    auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic corpus tools");
    corpus_cmd->require_subcommand(1);
    auto* gen = corpus_cmd->add_subcommand("gen", "Generate, render and split a corpus");
    gen->add_option("--config", config_path, "Generator config JSON (defaults when omitted)");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Corpus seed")->required();

    auto* train = app.add_subcommand("train", "Training stages");
    train->require_subcommand(1);
    auto* pretrain = train->add_subcommand("pretrain", "Single-page encoder and decoder training");
    pretrain->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    pretrain->add_option("--out", out, "Checkpoint path")->required();
    pretrain->add_option("--config", config_path, "Run config JSON {model, train}");
    pretrain->add_option("--resume", resume_path, "Continue from this checkpoint");
    pretrain->add_flag("--double", use_double, "Train in double precision");
    auto* adapter = train->add_subcommand("adapter", "Adapter training with a frozen encoder");
    adapter->add_option("--base", base_path, "Pretrained checkpoint")->required();
    adapter->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    adapter->add_option("--out", out, "Checkpoint path")->required();
    adapter->add_option("--config", config_path, "Run config JSON {model, train}");
    adapter->add_option("--resume", resume_path, "Continue from this checkpoint");
    adapter->add_flag("--double", use_double, "Train in double precision");

    auto* eval = app.add_subcommand("eval", "Greedy parsing and per-scenario metrics");
    eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    eval->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    eval->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--report", report_path, "Report path; .csv and .json are written")->required();

    auto* ablate = app.add_subcommand("ablate", "L x N adapter grid");
    ablate->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    ablate->add_option("--base", base_path, "Pretrained checkpoint")->required();
    ablate->add_option("--out", out, "Output directory")->required();
    ablate->add_option("--config", config_path, "Run config JSON {model, train}");
    ablate->add_option("--layers", l_values, "Comma-separated L values");
    ablate->add_option("--latents", n_values, "Comma-separated N values");
    ablate->add_flag("--fresh", fresh, "Retrain even when finished checkpoints exist");

    auto* experiment = app.add_subcommand("experiment", "Experiments");
    experiment->require_subcommand(1);
    auto* context = experiment->add_subcommand("context", "Baseline vs context model over several seeds");
    context->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    context->add_option("--out", out, "Output directory")->required();
    context->add_option("--seeds", seeds, "Number of seeds");
    context->add_option("--config", config_path, "Run config JSON {model, train}");
    context->add_flag("--fresh", fresh, "Retrain even when finished checkpoints exist");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) {
            corpus::GenConfig cfg;
            if (!config_path.empty()) {
                const auto j = read_json(config_path);
                cfg = (j.contains("gen_config") ? j.at("gen_config") : j).get<corpus::GenConfig>();
            }
            const auto c = corpus::generate_corpus(seed, cfg, default_workers());
            corpus::write_corpus(c, out);
            std::cout << "wrote " << c.pages.size() << " pages of " << c.documents.size() << " documents to " << out << "\n";
            for (auto s : {corpus::Split::train, corpus::Split::val, corpus::Split::test}) {
                std::cout << corpus::to_string(s) << ": " << c.manifest.get(s).size() << " samples\n";
            }
        } else if (pretrain->parsed() || adapter->parsed()) {
            const auto rc = load_run_config(config_path);
            const auto c = corpus::load_corpus(corpus_dir);
            std::optional<model::Checkpoint> resume;
            if (!resume_path.empty()) resume = model::load_checkpoint(resume_path);
            const model::Checkpoint* rp = resume ? &*resume : nullptr;
            harness::TrainResult r;
            if (pretrain->parsed()) {
                r = use_double ? harness::pretrain_single_page<double>(c, rc.model, rc.train, out, stderr_log(), rp)
                               : harness::pretrain_single_page<float>(c, rc.model, rc.train, out, stderr_log(), rp);
            } else {
                const auto base = model::load_checkpoint(base_path);
                r = use_double ? harness::train_adapter<double>(base, c, rc.model, rc.train, out, stderr_log(), rp)
                               : harness::train_adapter<float>(base, c, rc.model, rc.train, out, stderr_log(), rp);
            }
            std::cout << "checkpoint " << r.checkpoint.string() << " after " << r.epochs.size() << " epochs ("
                      << metrics::format_fixed(r.seconds, 1) << " s)\n";
        } else if (eval->parsed()) {
            const auto ckpt = model::load_checkpoint(ckpt_path);
            const auto c = corpus::load_corpus(corpus_dir);
            const auto split = corpus::parse_split(split_name);
            if (checkpoint_is_f32(ckpt)) eval_checkpoint<float>(ckpt, c, split, report_path);
            else eval_checkpoint<double>(ckpt, c, split, report_path);
        } else if (ablate->parsed()) {
            const auto rc = load_run_config(config_path);
            const auto c = corpus::load_corpus(corpus_dir);
            const auto base = model::load_checkpoint(base_path);
            harness::ExperimentOptions opt;
            opt.reuse = !fresh;
            const auto rows = harness::ablate_grid<float>(c, base, rc, parse_list(l_values), parse_list(n_values), out, stderr_log(), opt);
            std::cout << harness::grid_csv(rows);
        } else if (context->parsed()) {
            const auto rc = load_run_config(config_path);
            const auto c = corpus::load_corpus(corpus_dir);
            harness::ExperimentOptions opt;
            opt.reuse = !fresh;
            const auto r = harness::context_experiment<float>(c, rc, seeds, out, stderr_log(), opt);
            std::cout << harness::context_csv(r);
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const UsageError& e) {
        std::cerr << "usage: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}
