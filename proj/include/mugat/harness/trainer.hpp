#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugat/corpus/corpus.hpp"
#include "mugat/harness/config.hpp"
#include "mugat/harness/optimizer.hpp"
#include "mugat/model/checkpoint.hpp"
#include "mugat/numerics/gradients.hpp"
#include "mugat/parallel.hpp"

namespace mugat::harness {

enum class Stage { pretrain, adapter };

inline std::string_view to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "adapter"; }

struct StepInfo {
    Stage stage = Stage::pretrain;
    std::size_t epoch = 0;
    std::size_t step = 0;  // optimiser steps taken so far, this one included
    std::map<ParamGroup, double> lr;
    double loss = 0.0;  // mean over the batch
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::map<ParamGroup, double> lr;
    double seconds = 0.0;
};

struct TrainCallbacks {
    std::function<void(const std::string&)> log;
    std::function<void(const StepInfo&)> on_step;
};

struct TrainResult {
    std::filesystem::path checkpoint;
    std::vector<EpochLog> epochs;
    double seconds = 0.0;
};

inline std::size_t resolve_workers(std::size_t w) { return w == 0 ? default_workers() : w; }

/// Learning rate of every trainable group for `epoch`.
inline std::map<ParamGroup, double> epoch_lrs(const std::map<ParamGroup, double>& base, const TrainConfig& tc, std::size_t epoch)
{
    std::map<ParamGroup, double> out;
    for (const auto& [group, lr] : base) out[group] = scheduled_lr(lr, tc.gamma, tc.lr_floor, epoch);
    return out;
}

/// Visiting order of the training samples in `epoch`; a function of the
/// data-order seed and the epoch only, so resumed runs see the same batches.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t data_order_seed, std::size_t epoch)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(data_order_seed, epoch));
    deterministic_shuffle(order, rng);
    return order;
}

template <typename T>
using SampleLossFn = std::function<Var(Graph<T>&, std::size_t)>;

/// Checkpoint contents for a training run: parameters, optimiser moments and
/// the sidecar needed to resume.
template <typename T>
model::Checkpoint training_checkpoint(const model::MugatModel<T>& m, const AdamW<T>& opt, const TrainConfig& tc, Stage stage,
                                      std::size_t epochs_done, const nlohmann::json& extra = {})
{
    model::Checkpoint c;
    c.tensors = model::model_tensors(m);
    opt.append_state(c.tensors);
    c.meta = model::model_meta(m);
    c.meta["stage"] = std::string(to_string(stage));
    c.meta["epochs_done"] = epochs_done;
    c.meta["optim_steps"] = opt.steps();
    c.meta["train"] = tc;
    c.meta["dtype"] = model::dtype_of<T>() == model::DType::f32 ? "f32" : "f64";
    if (extra.is_object()) c.meta.update(extra);
    return c;
}

/// Mini-batch loop shared by both stages. Per-sample gradients may be
/// computed on several threads; they are summed in batch order, so results do
/// not depend on the worker count. A checkpoint is written after every epoch
/// and is the last good state if a later epoch fails.
template <typename T>
std::vector<EpochLog> run_epochs(model::MugatModel<T>& m, AdamW<T>& opt, const TrainConfig& tc, Stage stage,
                                 const std::map<ParamGroup, double>& base_lr, std::size_t n_samples, std::size_t first_epoch,
                                 std::size_t end_epoch, const SampleLossFn<T>& sample_loss, const std::filesystem::path& out,
                                 const TrainCallbacks& cb, const nlohmann::json& extra = {})
{
    if (n_samples == 0) throw std::invalid_argument("training: no samples");
    const std::size_t workers = resolve_workers(tc.workers);
    std::vector<EpochLog> logs;
    for (std::size_t epoch = first_epoch; epoch < end_epoch; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto lr = epoch_lrs(base_lr, tc, epoch);
        const auto order = epoch_order(n_samples, tc.data_order_seed, epoch);
        double loss_sum = 0.0;
        try {
            for (std::size_t b = 0; b < n_samples; b += tc.batch_size) {
                const std::size_t bs = std::min(tc.batch_size, n_samples - b);
                std::vector<std::map<std::string, Tensor<T>>> grads(bs);
                std::vector<double> losses(bs);
                parallel_for(bs, workers, [&](std::size_t k) {
                    Graph<T> g;
                    const Var loss = sample_loss(g, order[b + k]);
                    losses[k] = static_cast<double>(g.value(loss)[0]);
                    grads[k] = gradients(g, loss, m.params());
                });
                auto& total = grads[0];
                for (std::size_t k = 1; k < bs; ++k) {
                    for (auto& [name, t] : total) {
                        const auto& other = grads[k].at(name);
                        for (std::size_t i = 0; i < t.size(); ++i) t[i] += other[i];
                    }
                }
                const T inv = T(1) / static_cast<T>(bs);
                for (auto& [name, t] : total) {
                    for (auto& v : t.values()) v *= inv;
                }
                opt.step(m.params_mut(), total, lr);
                double batch_loss = 0.0;
                for (double l : losses) batch_loss += l;
                loss_sum += batch_loss;
                if (cb.on_step) cb.on_step(StepInfo{stage, epoch, static_cast<std::size_t>(opt.steps()), lr, batch_loss / static_cast<double>(bs)});
            }
        } catch (const NumericError& e) {
            if (cb.log) cb.log("numeric failure in epoch " + std::to_string(epoch) + ": " + e.what() + "; last good checkpoint: " + out.string());
            throw;
        }
        EpochLog log{epoch, loss_sum / static_cast<double>(n_samples), lr,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
        logs.push_back(log);
        model::save_checkpoint(out, training_checkpoint(m, opt, tc, stage, epoch + 1, extra));
        if (cb.log) {
            std::string line = std::string(to_string(stage)) + " epoch " + std::to_string(epoch) + " loss " + std::to_string(log.mean_loss);
            for (const auto& [g, v] : lr) line += " lr_" + std::string(to_string(g)) + " " + std::to_string(v);
            line += " (" + std::to_string(log.seconds) + " s)";
            cb.log(line);
        }
    }
    return logs;
}

inline AdamWConfig adamw_config(const TrainConfig& tc) { return {tc.beta1, tc.beta2, tc.eps, tc.weight_decay}; }

inline std::vector<corpus::SampleDescriptor> training_samples(const corpus::Corpus& c, const TrainConfig& tc)
{
    std::vector<corpus::SampleDescriptor> s = c.manifest.train;
    if (tc.max_train_samples > 0 && s.size() > tc.max_train_samples) s.resize(tc.max_train_samples);
    if (s.empty()) throw corpus::DataError("corpus has no training samples");
    return s;
}

/// Restores parameters, optimiser state and the epoch counter from a
/// checkpoint written by run_epochs.
template <typename T>
std::size_t restore_training(model::MugatModel<T>& m, AdamW<T>& opt, const model::Checkpoint& ckpt, Stage stage)
{
    if (ckpt.meta.value("stage", std::string()) != to_string(stage)) {
        throw model::ConfigMismatch("resume checkpoint is not from the " + std::string(to_string(stage)) + " stage");
    }
    if (model::checkpoint_config<T>(ckpt) != m.config()) throw model::ConfigMismatch("resume checkpoint has a different model config");
    model::load_parameters(m, ckpt, {ParamGroup::encoder, ParamGroup::adapter, ParamGroup::decoder});
    opt.load_state(ckpt, ckpt.meta.at("optim_steps").get<std::uint64_t>());
    return ckpt.meta.at("epochs_done").get<std::size_t>();
}

/// Trains encoder and decoder on single pages (no adapter, memory length P).
/// Every training page is used with its neighbours hidden.
template <typename T>
TrainResult pretrain_single_page(const corpus::Corpus& c, model::ModelConfig mc, const TrainConfig& tc,
                                 const std::filesystem::path& out, const TrainCallbacks& cb = {},
                                 const model::Checkpoint* resume = nullptr)
{
    tc.validate();
    mc.n_latents = 0;
    const auto t0 = std::chrono::steady_clock::now();
    model::MugatModel<T> m(mc, tc.init_seed);
    AdamW<T> opt(adamw_config(tc));
    std::size_t first = 0;
    if (resume) first = restore_training(m, opt, *resume, Stage::pretrain);

    const corpus::Tokenizer tok;
    const auto descs = training_samples(c, tc);
    std::vector<model::ContextSample> samples;
    for (const auto& d : descs) {
        samples.push_back(model::ContextSample{{nullptr, &c.page(d.doc_id, d.page_index), nullptr}, tok.encode(d.markup)});
        if (samples.back().target.size() > mc.max_target_len + 1) {
            throw corpus::DataError("target of doc " + std::to_string(d.doc_id) + " page " + std::to_string(d.page_index) +
                                    " exceeds max_target_len");
        }
    }
    const std::map<ParamGroup, double> base{{ParamGroup::encoder, tc.lr_pretrain}, {ParamGroup::decoder, tc.lr_pretrain}};
    SampleLossFn<T> loss = [&](Graph<T>& g, std::size_t i) { return m.sample_loss(g, samples[i]); };
    TrainResult r;
    r.checkpoint = out;
    const nlohmann::json extra{{"corpus", corpus::corpus_config_json(c)}};
    r.epochs = run_epochs(m, opt, tc, Stage::pretrain, base, samples.size(), first, tc.pretrain_epochs, loss, out, cb, extra);
    if (first >= tc.pretrain_epochs) model::save_checkpoint(out, training_checkpoint(m, opt, tc, Stage::pretrain, first, extra));
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Page embeddings of a frozen encoder, computed once per page.
template <typename T>
class EmbeddingCache {
public:
    EmbeddingCache(const model::MugatModel<T>& m, const corpus::Corpus& c, const std::vector<std::pair<std::size_t, std::size_t>>& keys,
                   std::size_t workers)
      : empty_(m.empty_page_embedding())
    {
        std::vector<std::pair<std::size_t, std::size_t>> todo;
        for (const auto& k : keys) {
            if (!index_.count(k)) {
                index_[k] = todo.size();
                todo.push_back(k);
            }
        }
        values_.resize(todo.size());
        parallel_for(todo.size(), workers, [&](std::size_t i) { values_[i] = m.encode_page(c.page(todo[i].first, todo[i].second)); });
    }

    const model::PageEmbedding<T>& get(std::size_t doc, std::size_t page) const { return values_[index_.at({doc, page})]; }
    const model::PageEmbedding<T>& empty() const { return empty_; }

    /// Embedding of a neighbour, or the empty page when it is unavailable.
    const model::PageEmbedding<T>& neighbour(std::size_t doc, std::size_t page, bool available) const
    {
        return available ? get(doc, page) : empty_;
    }

private:
    model::PageEmbedding<T> empty_;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> index_;
    std::vector<model::PageEmbedding<T>> values_;
};

/// Pages a set of samples needs: each current page plus its available
/// neighbours.
inline std::vector<std::pair<std::size_t, std::size_t>> needed_pages(const std::vector<corpus::SampleDescriptor>& samples,
                                                                      bool all_real_neighbours = false,
                                                                      const corpus::Corpus* c = nullptr)
{
    std::vector<std::pair<std::size_t, std::size_t>> keys;
    for (const auto& s : samples) {
        keys.emplace_back(s.doc_id, s.page_index);
        const bool prev = all_real_neighbours ? (s.page_index > 0 && c->contains(s.doc_id, s.page_index - 1)) : s.prev_available;
        const bool next = all_real_neighbours ? c->contains(s.doc_id, s.page_index + 1) : s.next_available;
        if (prev) keys.emplace_back(s.doc_id, s.page_index - 1);
        if (next) keys.emplace_back(s.doc_id, s.page_index + 1);
    }
    return keys;
}

/// Loads encoder and decoder from a single-page checkpoint into a model of
/// config `mc`, which may differ from the base only in N and L.
template <typename T>
model::MugatModel<T> model_from_base(const model::Checkpoint& base, const model::ModelConfig& mc, std::uint64_t init_seed)
{
    model::ModelConfig a = model::checkpoint_config<T>(base), b = mc;
    a.n_latents = b.n_latents = 0;
    a.adapter_layers = b.adapter_layers = 0;
    if (a != b) {
        throw model::ConfigMismatch("base checkpoint config " + nlohmann::json(model::checkpoint_config<T>(base)).dump() +
                                    " is incompatible with " + nlohmann::json(mc).dump());
    }
    model::MugatModel<T> m(mc, init_seed);
    model::load_parameters(m, base, {ParamGroup::encoder, ParamGroup::decoder});
    return m;
}

/// Frozen encoder, adapter at lr_adapter, decoder at lr_decoder, one
/// optimiser. With N = 0 only the decoder is fine-tuned (the baseline).
template <typename T>
TrainResult train_adapter(const model::Checkpoint& base, const corpus::Corpus& c, const model::ModelConfig& mc,
                          const TrainConfig& tc, const std::filesystem::path& out, const TrainCallbacks& cb = {},
                          const model::Checkpoint* resume = nullptr)
{
    tc.validate();
    const auto t0 = std::chrono::steady_clock::now();
    model::MugatModel<T> m = model_from_base<T>(base, mc, tc.init_seed);
    m.params_mut().set_trainable(ParamGroup::encoder, false);
    AdamW<T> opt(adamw_config(tc));
    std::size_t first = 0;
    if (resume) first = restore_training(m, opt, *resume, Stage::adapter);
    const std::uint64_t encoder_before = group_hash(m.params(), ParamGroup::encoder);

    const corpus::Tokenizer tok;
    const auto descs = training_samples(c, tc);
    const EmbeddingCache<T> cache(m, c, needed_pages(descs), resolve_workers(tc.workers));
    std::vector<std::vector<int>> targets;
    for (const auto& d : descs) targets.push_back(tok.encode(d.markup));

    std::map<ParamGroup, double> base_lr{{ParamGroup::decoder, tc.lr_decoder}};
    if (mc.has_adapter()) base_lr[ParamGroup::adapter] = tc.lr_adapter;
    SampleLossFn<T> loss = [&](Graph<T>& g, std::size_t i) {
        const auto& d = descs[i];
        const Var curr = g.constant(cache.get(d.doc_id, d.page_index).matrix);
        if (!mc.has_adapter()) return m.loss(g, curr, curr, curr, targets[i]);
        const Var prev = g.constant(cache.neighbour(d.doc_id, d.page_index - 1, d.prev_available).matrix);
        const Var next = g.constant(cache.neighbour(d.doc_id, d.page_index + 1, d.next_available).matrix);
        return m.loss(g, prev, curr, next, targets[i]);
    };
    TrainResult r;
    r.checkpoint = out;
    const nlohmann::json extra{{"corpus", corpus::corpus_config_json(c)}};
    r.epochs = run_epochs(m, opt, tc, Stage::adapter, base_lr, descs.size(), first, tc.adapter_epochs, loss, out, cb, extra);
    if (first >= tc.adapter_epochs) model::save_checkpoint(out, training_checkpoint(m, opt, tc, Stage::adapter, first, extra));
    if (group_hash(m.params(), ParamGroup::encoder) != encoder_before) throw std::logic_error("encoder parameters changed while frozen");
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace mugat::harness
