#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mugat/blocks/attention.hpp"
#include "mugat/corpus/tokenizer.hpp"

namespace mugat::model {

class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Toy-scale sizes. The reference full-scale values are P=588 page vectors of
/// width d=1024 on (896, 672) rasters; they are not trainable on a CPU.
struct ModelConfig {
    std::size_t image_h = 64;
    std::size_t image_w = 96;
    std::size_t patch = 8;
    std::size_t d = 64;
    std::size_t n_heads = 4;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 2;
    std::size_t n_latents = 4;       // N; 0 builds the single-page baseline without an adapter
    std::size_t adapter_layers = 2;  // L
    std::size_t ffn_mult = 4;
    std::size_t vocab_size = corpus::Tokenizer{}.vocab_size();
    std::size_t max_target_len = 160;  // decoder input positions, BOS included

    std::size_t pages_len() const { return (image_h / patch) * (image_w / patch); }  // P
    std::size_t patch_dim() const { return patch * patch; }
    bool has_adapter() const { return n_latents > 0; }
    blocks::AttentionConfig attention() const { return {d, n_heads}; }

    void validate() const
    {
        if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
            throw std::invalid_argument("model: patch " + std::to_string(patch) + " must divide the page " +
                                        std::to_string(image_h) + "x" + std::to_string(image_w));
        }
        if (pages_len() < 1) throw std::invalid_argument("model: P must be >= 1");
        attention().validate();
        if (enc_layers == 0 || dec_layers == 0) throw std::invalid_argument("model: encoder and decoder need >= 1 layer");
        if (has_adapter() && adapter_layers == 0) throw std::invalid_argument("model: L must be >= 1 when N > 0");
        if (n_latents >= pages_len()) {
            throw std::invalid_argument("model: N = " + std::to_string(n_latents) + " must be smaller than P = " +
                                        std::to_string(pages_len()));
        }
        if (ffn_mult == 0) throw std::invalid_argument("model: ffn_mult must be positive");
        if (vocab_size <= static_cast<std::size_t>(corpus::Tokenizer::num_specials)) {
            throw std::invalid_argument("model: vocab_size too small");
        }
        if (max_target_len < 2) throw std::invalid_argument("model: max_target_len must be >= 2");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c)
{
    j = nlohmann::json{{"image_h", c.image_h},       {"image_w", c.image_w},
                       {"patch", c.patch},           {"d", c.d},
                       {"n_heads", c.n_heads},       {"enc_layers", c.enc_layers},
                       {"dec_layers", c.dec_layers}, {"n_latents", c.n_latents},
                       {"adapter_layers", c.adapter_layers}, {"ffn_mult", c.ffn_mult},
                       {"vocab_size", c.vocab_size}, {"max_target_len", c.max_target_len}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c)
{
    const ModelConfig def;
    auto get = [&](const char* key, std::size_t fallback) { return j.contains(key) ? j.at(key).get<std::size_t>() : fallback; };
    c.image_h = get("image_h", def.image_h);
    c.image_w = get("image_w", def.image_w);
    c.patch = get("patch", def.patch);
    c.d = get("d", def.d);
    c.n_heads = get("n_heads", def.n_heads);
    c.enc_layers = get("enc_layers", def.enc_layers);
    c.dec_layers = get("dec_layers", def.dec_layers);
    c.n_latents = get("n_latents", def.n_latents);
    c.adapter_layers = get("adapter_layers", def.adapter_layers);
    c.ffn_mult = get("ffn_mult", def.ffn_mult);
    c.vocab_size = get("vocab_size", def.vocab_size);
    c.max_target_len = get("max_target_len", def.max_target_len);
}

}  // namespace mugat::model
