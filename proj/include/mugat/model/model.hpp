#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugat/blocks/attention.hpp"
#include "mugat/blocks/feed_forward.hpp"
#include "mugat/blocks/page_positions.hpp"
#include "mugat/corpus/render.hpp"
#include "mugat/corpus/tokenizer.hpp"
#include "mugat/model/config.hpp"
#include "mugat/numerics/graph.hpp"
#include "mugat/numerics/ops.hpp"
#include "mugat/numerics/rng.hpp"

namespace mugat::model {

enum class EmbeddingSource { real_page, empty_page };

template <typename T>
struct PageEmbedding {
    Tensor<T> matrix;  // [P x d]
    EmbeddingSource source = EmbeddingSource::real_page;
};

template <typename T>
struct AdapterState {
    Tensor<T> latents;  // [N x d]
};

/// Missing neighbours are null.
struct PageTriplet {
    const corpus::PageBitmap* prev = nullptr;
    const corpus::PageBitmap* curr = nullptr;
    const corpus::PageBitmap* next = nullptr;
};

struct ContextSample {
    PageTriplet pages;
    std::vector<int> target;  // BOS ... EOS
};

struct ParseResult {
    std::string text;
    std::vector<int> tokens;  // generated ids, EOS excluded
    bool truncated = false;   // hit max_target_len before EOS
};

struct EncoderLayer {
    blocks::LayerNormParams ln_attn;
    blocks::AttentionParams attn;
    blocks::LayerNormParams ln_ffn;
    blocks::FeedForwardParams ffn;
};

struct AdapterLayer {
    blocks::LayerNormParams ln_latents;
    blocks::LayerNormParams ln_pages;
    blocks::AttentionParams cross;
    blocks::LayerNormParams ln_ffn;
    blocks::FeedForwardParams ffn;
};

struct DecoderLayer {
    blocks::LayerNormParams ln_self;
    blocks::AttentionParams self_attn;
    blocks::LayerNormParams ln_cross;
    blocks::AttentionParams cross;
    blocks::LayerNormParams ln_ffn;
    blocks::FeedForwardParams ffn;
};

/// Page encoder, context adapter and autoregressive decoder over one
/// ParameterStore. Every parameter is tagged encoder, adapter or decoder.
template <typename T>
class MugatModel {
public:
    MugatModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg), init_seed_(init_seed), cache_(std::make_unique<Cache>())
    {
        cfg_.validate();
        build();
    }

    MugatModel(const MugatModel& o)
      : cfg_(o.cfg_), init_seed_(o.init_seed_), store_(o.store_), enc_(o.enc_), adp_(o.adp_), dec_(o.dec_),
        version_(o.version_), cache_(std::make_unique<Cache>())
    {
    }
    MugatModel& operator=(const MugatModel& o)
    {
        if (this != &o) {
            MugatModel tmp(o);
            swap(tmp);
        }
        return *this;
    }
    MugatModel(MugatModel&&) noexcept = default;
    MugatModel& operator=(MugatModel&&) noexcept = default;

    const ModelConfig& config() const noexcept { return cfg_; }
    std::uint64_t init_seed() const noexcept { return init_seed_; }
    const ParameterStore<T>& params() const noexcept { return store_; }

    /// Mutable access; any cached value derived from parameters is dropped.
    ParameterStore<T>& params_mut() noexcept
    {
        ++version_;
        return store_;
    }
    std::uint64_t version() const noexcept { return version_; }
    std::size_t encode_count() const noexcept { return cache_->encodes.load(); }

    bool group_trainable(ParamGroup group) const
    {
        for (const auto& p : store_.all()) {
            if (p.group == group && p.trainable) return true;
        }
        return false;
    }

    // ---- graph-level forward passes ------------------------------------

    /// Patch pixels as a [P x patch^2] matrix, 1 for ink and 0 for background.
    Tensor<T> patchify(const corpus::PageBitmap& page) const
    {
        if (page.height != cfg_.image_h || page.width != cfg_.image_w) {
            throw ShapeError("encode_page: bitmap " + std::to_string(page.height) + "x" + std::to_string(page.width) +
                             " does not match model page " + std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w));
        }
        const std::size_t ps = cfg_.patch, gw = cfg_.image_w / ps;
        Tensor<T> out({cfg_.pages_len(), cfg_.patch_dim()});
        for (std::size_t p = 0; p < cfg_.pages_len(); ++p) {
            const std::size_t y0 = (p / gw) * ps, x0 = (p % gw) * ps;
            for (std::size_t dy = 0; dy < ps; ++dy) {
                for (std::size_t dx = 0; dx < ps; ++dx) out[p * ps * ps + dy * ps + dx] = page.at(y0 + dy, x0 + dx) ? T(1) : T(0);
            }
        }
        return out;
    }

    Var encode(Graph<T>& g, const corpus::PageBitmap& page) const
    {
        const Tensor<T> patches = patchify(page);
        cache_->encodes.fetch_add(1);
        auto bind = [&](ParamId id) { return g.param(store_[id]); };
        Var x = ops::linear(g, g.constant(patches), bind(enc_.patch_w), bind(enc_.patch_b));
        x = ops::add(g, x, bind(enc_.pos));
        const auto att = cfg_.attention();
        for (const auto& layer : enc_.layers) {
            const Var h = blocks::layer_norm(g, store_, layer.ln_attn, x);
            x = ops::add(g, x, blocks::multi_head_attention(g, store_, layer.attn, att, h, h));
            x = ops::add(g, x, blocks::feed_forward(g, store_, layer.ffn, blocks::layer_norm(g, store_, layer.ln_ffn, x)));
        }
        return blocks::layer_norm(g, store_, enc_.ln_out, x);
    }

    /// Embedding of a blank page. Traced through the encoder while it is
    /// trainable, otherwise taken from the cache.
    Var empty_page(Graph<T>& g) const
    {
        if (group_trainable(ParamGroup::encoder)) {
            return encode(g, corpus::blank_page(cfg_.image_h, cfg_.image_w));
        }
        return g.constant(empty_page_embedding().matrix);
    }

    Var adapter(Graph<T>& g, Var prev, Var curr, Var next, AttentionTrace* trace = nullptr) const
    {
        require_adapter();
        for (Var v : {prev, curr, next}) require_page_shape(g.value(v).shape(), "adapter_forward");
        const Var pages = blocks::add_page_positions(g, store_, adp_.positions, prev, curr, next);
        Var lat = g.param(store_[adp_.latents]);
        const auto att = cfg_.attention();
        for (const auto& layer : adp_.layers) {
            const Var kv = blocks::layer_norm(g, store_, layer.ln_pages, pages);
            const Var q = blocks::layer_norm(g, store_, layer.ln_latents, lat);
            lat = ops::add(g, lat, blocks::multi_head_attention(g, store_, layer.cross, att, q, kv, nullptr, trace));
            lat = ops::add(g, lat, blocks::feed_forward(g, store_, layer.ffn, blocks::layer_norm(g, store_, layer.ln_ffn, lat)));
        }
        return lat;
    }

    /// Next-token logits [T x vocab] for every prefix position. Cross-attention
    /// memory is the current page followed by the latents (P + N rows).
    Var decode(Graph<T>& g, Var curr, std::optional<Var> latents, const std::vector<int>& prefix,
               AttentionTrace* trace = nullptr) const
    {
        check_prefix(prefix);
        require_page_shape(g.value(curr).shape(), "decode_logits");
        if (latents.has_value() != cfg_.has_adapter()) {
            throw std::invalid_argument("decode_logits: latents must be given exactly when the model has an adapter");
        }
        if (latents && (g.value(*latents).rows() != cfg_.n_latents || g.value(*latents).cols() != cfg_.d)) {
            throw ShapeError("decode_logits: latents " + shape_string(g.value(*latents).shape()));
        }
        const Var memory = latents ? ops::concat_rows(g, {curr, *latents}) : curr;
        std::vector<std::size_t> ids(prefix.begin(), prefix.end()), pos(prefix.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
        auto bind = [&](ParamId id) { return g.param(store_[id]); };
        Var x = ops::add(g, ops::gather_rows(g, bind(dec_.tok_emb), ids), ops::gather_rows(g, bind(dec_.pos), pos));
        const AttentionMask mask = blocks::causal_mask(prefix.size());
        const auto att = cfg_.attention();
        for (const auto& layer : dec_.layers) {
            const Var h = blocks::layer_norm(g, store_, layer.ln_self, x);
            x = ops::add(g, x, blocks::multi_head_attention(g, store_, layer.self_attn, att, h, h, &mask));
            const Var c = blocks::layer_norm(g, store_, layer.ln_cross, x);
            x = ops::add(g, x, blocks::multi_head_attention(g, store_, layer.cross, att, c, memory, nullptr, trace));
            x = ops::add(g, x, blocks::feed_forward(g, store_, layer.ffn, blocks::layer_norm(g, store_, layer.ln_ffn, x)));
        }
        return ops::linear(g, blocks::layer_norm(g, store_, dec_.ln_out, x), bind(dec_.head_w), bind(dec_.head_b));
    }

    /// Teacher-forced cross-entropy of `target` (BOS ... EOS) given page
    /// embeddings; prev and next are ignored without an adapter.
    Var loss(Graph<T>& g, Var prev, Var curr, Var next, const std::vector<int>& target) const
    {
        if (target.size() < 2) throw std::invalid_argument("forward_loss: empty target");
        std::vector<int> input(target.begin(), target.end() - 1);
        std::vector<int> shifted(target.begin() + 1, target.end());
        std::optional<Var> lat;
        if (cfg_.has_adapter()) lat = adapter(g, prev, curr, next);
        return ops::cross_entropy_logits(g, decode(g, curr, lat, input), shifted, corpus::Tokenizer::pad);
    }

    Var sample_loss(Graph<T>& g, const ContextSample& s) const
    {
        if (!s.pages.curr) throw std::invalid_argument("forward_loss: sample has no current page");
        const bool trace_encoder = group_trainable(ParamGroup::encoder);
        auto page = [&](const corpus::PageBitmap* p) {
            if (!p) return empty_page(g);
            return trace_encoder ? encode(g, *p) : g.constant(encode_page(*p).matrix);
        };
        const Var curr = page(s.pages.curr);
        if (!cfg_.has_adapter()) return loss(g, curr, curr, curr, s.target);
        const Var prev = page(s.pages.prev);
        const Var next = page(s.pages.next);
        return loss(g, prev, curr, next, s.target);
    }

    // ---- value-level API ---------------------------------------------------

    PageEmbedding<T> encode_page(const corpus::PageBitmap& page) const
    {
        Graph<T> g(false);
        return {g.value(encode(g, page)), EmbeddingSource::real_page};
    }

    /// encode_page of the all-background page, computed once per parameter
    /// version.
    PageEmbedding<T> empty_page_embedding() const
    {
        std::lock_guard lock(cache_->mutex);
        if (!cache_->empty || cache_->empty_version != version_) {
            cache_->empty = encode_page(corpus::blank_page(cfg_.image_h, cfg_.image_w)).matrix;
            cache_->empty_version = version_;
        }
        return {*cache_->empty, EmbeddingSource::empty_page};
    }

    PageEmbedding<T> embed_or_empty(const corpus::PageBitmap* page) const
    {
        return page ? encode_page(*page) : empty_page_embedding();
    }

    AdapterState<T> adapter_forward(const PageEmbedding<T>& prev, const PageEmbedding<T>& curr, const PageEmbedding<T>& next,
                                    AttentionTrace* trace = nullptr) const
    {
        Graph<T> g(false);
        const Var out = adapter(g, g.constant(prev.matrix), g.constant(curr.matrix), g.constant(next.matrix), trace);
        return {g.value(out)};
    }

    Tensor<T> decode_logits(const PageEmbedding<T>& curr, const std::optional<AdapterState<T>>& state,
                            const std::vector<int>& prefix, AttentionTrace* trace = nullptr) const
    {
        Graph<T> g(false);
        std::optional<Var> lat;
        if (state) lat = g.constant(state->latents);
        return g.value(decode(g, g.constant(curr.matrix), lat, prefix, trace));
    }

    T forward_loss(const ContextSample& s) const
    {
        Graph<T> g(false);
        return g.value(sample_loss(g, s))[0];
    }

    /// Adapter output for a page triplet, or nothing for the baseline.
    std::optional<AdapterState<T>> context_state(const PageEmbedding<T>& prev, const PageEmbedding<T>& curr,
                                                 const PageEmbedding<T>& next) const
    {
        if (!cfg_.has_adapter()) return std::nullopt;
        return adapter_forward(prev, curr, next);
    }

    /// Greedy decoding from BOS until EOS or max_target_len.
    ParseResult parse_embeddings(const PageEmbedding<T>& prev, const PageEmbedding<T>& curr, const PageEmbedding<T>& next,
                                 const corpus::Tokenizer& tok) const
    {
        const auto state = context_state(prev, curr, next);
        Tensor<T> memory = curr.matrix;
        if (state) {
            Graph<T> g(false);
            memory = g.value(ops::concat_rows(g, {g.constant(curr.matrix), g.constant(state->latents)}));
        }
        IncrementalDecoder dec(*this, memory);
        ParseResult out;
        int token = corpus::Tokenizer::bos;
        for (std::size_t pos = 0; pos < cfg_.max_target_len; ++pos) {
            token = dec.step(token);
            if (token == corpus::Tokenizer::eos) break;
            out.tokens.push_back(token);
        }
        out.truncated = token != corpus::Tokenizer::eos;
        out.text = tok.decode(out.tokens);
        return out;
    }

    ParseResult parse_page(const PageTriplet& t, const corpus::Tokenizer& tok) const
    {
        if (!t.curr) throw std::invalid_argument("parse_page: no current page");
        const auto curr = encode_page(*t.curr);
        if (!cfg_.has_adapter()) return parse_embeddings(curr, curr, curr, tok);
        return parse_embeddings(embed_or_empty(t.prev), curr, embed_or_empty(t.next), tok);
    }

    /// Decoder with per-layer key/value caches; one call per generated token.
    /// Produces the same logits as decode() on the growing prefix.
    class IncrementalDecoder {
    public:
        using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

        IncrementalDecoder(const MugatModel& m, const Tensor<T>& memory) : m_(m)
        {
            const auto& c = m.cfg_;
            const auto mem = as_matrix(memory);
            for (const auto& layer : m.dec_.layers) {
                LayerState s;
                s.k_self.resize(static_cast<Eigen::Index>(c.max_target_len), static_cast<Eigen::Index>(c.d));
                s.v_self.resize(static_cast<Eigen::Index>(c.max_target_len), static_cast<Eigen::Index>(c.d));
                s.k_mem = affine(mem, layer.cross.wk, layer.cross.bk);
                s.v_mem = affine(mem, layer.cross.wv, layer.cross.bv);
                layers_.push_back(std::move(s));
            }
        }

        /// Logits for the position after `token`.
        Vector logits(int token)
        {
            const auto& c = m_.cfg_;
            if (t_ >= c.max_target_len) throw std::length_error("decoder: prefix exceeds max_target_len");
            if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
                throw std::out_of_range("decoder: unknown token id " + std::to_string(token));
            }
            const auto tok = as_matrix(m_.store_[m_.dec_.tok_emb].value);
            const auto pos = as_matrix(m_.store_[m_.dec_.pos].value);
            RowMatrix<T> x = tok.row(token) + pos.row(static_cast<Eigen::Index>(t_));
            const auto n = static_cast<Eigen::Index>(t_ + 1);
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                const auto& layer = m_.dec_.layers[l];
                auto& s = layers_[l];
                RowMatrix<T> h = norm(x, layer.ln_self);
                s.k_self.row(n - 1) = affine(h, layer.self_attn.wk, layer.self_attn.bk);
                s.v_self.row(n - 1) = affine(h, layer.self_attn.wv, layer.self_attn.bv);
                x += affine(attend(affine(h, layer.self_attn.wq, layer.self_attn.bq), s.k_self.topRows(n), s.v_self.topRows(n)),
                            layer.self_attn.wo, layer.self_attn.bo);
                h = norm(x, layer.ln_cross);
                x += affine(attend(affine(h, layer.cross.wq, layer.cross.bq), s.k_mem, s.v_mem), layer.cross.wo, layer.cross.bo);
                h = norm(x, layer.ln_ffn);
                RowMatrix<T> hidden = affine(h, layer.ffn.w1, layer.ffn.b1);
                for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = ops::detail::gelu_value(hidden(i), GeluForm::exact);
                x += affine(hidden, layer.ffn.w2, layer.ffn.b2);
            }
            ++t_;
            RowMatrix<T> out = affine(norm(x, m_.dec_.ln_out), m_.dec_.head_w, m_.dec_.head_b);
            return out.row(0).transpose();
        }

        /// Greedy choice; ties go to the lowest id.
        int step(int token)
        {
            const Vector l = logits(token);
            Eigen::Index best = 0;
            for (Eigen::Index i = 1; i < l.size(); ++i) {
                if (l(i) > l(best)) best = i;
            }
            return static_cast<int>(best);
        }

        std::size_t position() const noexcept { return t_; }

    private:
        struct LayerState {
            RowMatrix<T> k_self, v_self, k_mem, v_mem;
        };

        template <typename M>
        RowMatrix<T> affine(const M& x, ParamId w, ParamId b) const
        {
            const auto wm = as_matrix(m_.store_[w].value);
            const auto& bv = m_.store_[b].value;
            RowMatrix<T> out = x * wm;
            for (Eigen::Index r = 0; r < out.rows(); ++r) {
                for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) += bv[static_cast<std::size_t>(c)];
            }
            return out;
        }

        RowMatrix<T> norm(const RowMatrix<T>& x, const blocks::LayerNormParams& p) const
        {
            const auto& gain = m_.store_[p.gain].value;
            const auto& bias = m_.store_[p.bias].value;
            const auto d = x.cols();
            RowMatrix<T> out(x.rows(), d);
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                T mean = 0;
                for (Eigen::Index c = 0; c < d; ++c) mean += x(r, c);
                mean /= static_cast<T>(d);
                T var = 0;
                for (Eigen::Index c = 0; c < d; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
                var /= static_cast<T>(d);
                const T is = T(1) / std::sqrt(var + T(1e-5));
                for (Eigen::Index c = 0; c < d; ++c) {
                    out(r, c) = (x(r, c) - mean) * is * gain[static_cast<std::size_t>(c)] + bias[static_cast<std::size_t>(c)];
                }
            }
            return out;
        }

        template <typename KM, typename VM>
        RowMatrix<T> attend(const RowMatrix<T>& q, const KM& k, const VM& v) const
        {
            const std::size_t heads = m_.cfg_.n_heads;
            const auto dh = static_cast<Eigen::Index>(m_.cfg_.d / heads);
            const T scale = T(1) / std::sqrt(static_cast<T>(dh));
            RowMatrix<T> out(1, q.cols());
            for (std::size_t h = 0; h < heads; ++h) {
                const auto c0 = static_cast<Eigen::Index>(h) * dh;
                RowMatrix<T> s = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
                const T mx = s.maxCoeff();
                T z = 0;
                for (Eigen::Index j = 0; j < s.cols(); ++j) {
                    s(0, j) = std::exp(s(0, j) - mx);
                    z += s(0, j);
                }
                s /= z;
                out.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
            }
            return out;
        }

        const MugatModel& m_;
        std::vector<LayerState> layers_;
        std::size_t t_ = 0;
    };

private:
    struct EncoderParams {
        ParamId patch_w, patch_b, pos;
        std::vector<EncoderLayer> layers;
        blocks::LayerNormParams ln_out;
    };
    struct AdapterParams {
        ParamId latents;
        blocks::PagePositionalEncodings positions;
        std::vector<AdapterLayer> layers;
    };
    struct DecoderParams {
        ParamId tok_emb, pos;
        std::vector<DecoderLayer> layers;
        blocks::LayerNormParams ln_out;
        ParamId head_w, head_b;
    };
    struct Cache {
        std::mutex mutex;
        std::optional<Tensor<T>> empty;
        std::uint64_t empty_version = 0;
        std::atomic<std::size_t> encodes{0};
    };

    void swap(MugatModel& o) noexcept
    {
        std::swap(cfg_, o.cfg_);
        std::swap(init_seed_, o.init_seed_);
        std::swap(store_, o.store_);
        std::swap(enc_, o.enc_);
        std::swap(adp_, o.adp_);
        std::swap(dec_, o.dec_);
        std::swap(version_, o.version_);
        std::swap(cache_, o.cache_);
    }

    /// Each group draws from its own stream, so encoder and decoder
    /// initialisation does not depend on the adapter shape.
    void build()
    {
        using blocks::add_attention;
        using blocks::add_feed_forward;
        using blocks::add_layer_norm;
        const std::size_t d = cfg_.d, P = cfg_.pages_len();
        const auto att = cfg_.attention();
        {
            const auto grp = ParamGroup::encoder;
            std::mt19937_64 rng(derive_seed(init_seed_, 1));
            enc_.patch_w = blocks::add_weight(store_, "encoder.patch.w", cfg_.patch_dim(), d, grp, rng);
            enc_.patch_b = blocks::add_zeros(store_, "encoder.patch.b", {d}, grp);
            enc_.pos = store_.add("encoder.pos", normal_tensor<T>({P, d}, blocks::kInitStddev, rng), grp);
            for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
                const std::string pre = "encoder.layer" + std::to_string(l);
                EncoderLayer layer;
                layer.ln_attn = add_layer_norm(store_, pre + ".ln_attn", d, grp);
                layer.attn = add_attention(store_, pre + ".attn", att, grp, rng);
                layer.ln_ffn = add_layer_norm(store_, pre + ".ln_ffn", d, grp);
                layer.ffn = add_feed_forward(store_, pre + ".ffn", d, cfg_.ffn_mult, grp, rng);
                enc_.layers.push_back(layer);
            }
            enc_.ln_out = add_layer_norm(store_, "encoder.ln_out", d, grp);
        }
        if (cfg_.has_adapter()) {
            const auto grp = ParamGroup::adapter;
            std::mt19937_64 rng(derive_seed(init_seed_, 2));
            adp_.latents = store_.add("adapter.latents", normal_tensor<T>({cfg_.n_latents, d}, blocks::kInitStddev, rng), grp);
            adp_.positions = blocks::add_page_positions_params(store_, "adapter", P, d, grp, rng);
            for (std::size_t l = 0; l < cfg_.adapter_layers; ++l) {
                const std::string pre = "adapter.layer" + std::to_string(l);
                AdapterLayer layer;
                layer.ln_latents = add_layer_norm(store_, pre + ".ln_latents", d, grp);
                layer.ln_pages = add_layer_norm(store_, pre + ".ln_pages", d, grp);
                layer.cross = add_attention(store_, pre + ".cross", att, grp, rng);
                layer.ln_ffn = add_layer_norm(store_, pre + ".ln_ffn", d, grp);
                layer.ffn = add_feed_forward(store_, pre + ".ffn", d, cfg_.ffn_mult, grp, rng);
                adp_.layers.push_back(layer);
            }
        }
        {
            const auto grp = ParamGroup::decoder;
            std::mt19937_64 rng(derive_seed(init_seed_, 3));
            dec_.tok_emb = store_.add("decoder.tok_emb", normal_tensor<T>({cfg_.vocab_size, d}, blocks::kInitStddev, rng), grp);
            dec_.pos = store_.add("decoder.pos", normal_tensor<T>({cfg_.max_target_len, d}, blocks::kInitStddev, rng), grp);
            for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
                const std::string pre = "decoder.layer" + std::to_string(l);
                DecoderLayer layer;
                layer.ln_self = add_layer_norm(store_, pre + ".ln_self", d, grp);
                layer.self_attn = add_attention(store_, pre + ".self", att, grp, rng);
                layer.ln_cross = add_layer_norm(store_, pre + ".ln_cross", d, grp);
                layer.cross = add_attention(store_, pre + ".cross", att, grp, rng);
                layer.ln_ffn = add_layer_norm(store_, pre + ".ln_ffn", d, grp);
                layer.ffn = add_feed_forward(store_, pre + ".ffn", d, cfg_.ffn_mult, grp, rng);
                dec_.layers.push_back(layer);
            }
            dec_.ln_out = add_layer_norm(store_, "decoder.ln_out", d, grp);
            dec_.head_w = blocks::add_weight(store_, "decoder.head.w", d, cfg_.vocab_size, grp, rng);
            dec_.head_b = blocks::add_zeros(store_, "decoder.head.b", {cfg_.vocab_size}, grp);
        }
    }

    void require_adapter() const
    {
        if (!cfg_.has_adapter()) throw std::logic_error("model has no adapter (N = 0)");
    }

    void require_page_shape(const Shape& s, const char* op) const
    {
        if (s.size() != 2 || s[0] != cfg_.pages_len() || s[1] != cfg_.d) {
            throw ShapeError(std::string(op) + ": page embedding " + shape_string(s) + ", expected [" +
                             std::to_string(cfg_.pages_len()) + "x" + std::to_string(cfg_.d) + "]");
        }
    }

    void check_prefix(const std::vector<int>& prefix) const
    {
        if (prefix.empty()) throw std::invalid_argument("decode_logits: empty prefix");
        if (prefix.size() > cfg_.max_target_len) {
            throw std::length_error("decode_logits: prefix length " + std::to_string(prefix.size()) + " exceeds max_target_len " +
                                    std::to_string(cfg_.max_target_len));
        }
        for (const int id : prefix) {
            if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
                throw std::out_of_range("decode_logits: unknown token id " + std::to_string(id));
            }
        }
    }

    ModelConfig cfg_;
    std::uint64_t init_seed_ = 0;
    ParameterStore<T> store_;
    EncoderParams enc_;
    AdapterParams adp_;
    DecoderParams dec_;
    std::uint64_t version_ = 0;
    std::unique_ptr<Cache> cache_;
};

}  // namespace mugat::model
