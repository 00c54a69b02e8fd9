#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mugat/model/config.hpp"

namespace mugat::harness {

/// Optimiser, schedule and budget. The corpus seed lives in the corpus; the
/// init and data-order seeds are separate so one can vary alone.
struct TrainConfig {
    std::size_t pretrain_epochs = 30;
    std::size_t adapter_epochs = 30;
    double lr_adapter = 5e-4;
    double lr_decoder = 5e-5;
    double lr_pretrain = 5e-4;
    double gamma = 0.9996;
    double lr_floor = 2e-6;
    std::size_t batch_size = 16;
    std::uint64_t init_seed = 1;
    std::uint64_t data_order_seed = 2;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t max_train_samples = 0;  // 0 uses the whole training split
    std::size_t workers = 0;            // 0 picks the hardware thread count

    void validate() const
    {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("train: gamma must be in (0, 1]");
        for (double lr : {lr_adapter, lr_decoder, lr_pretrain}) {
            if (!(lr > 0.0) || !(lr_floor < lr)) throw std::invalid_argument("train: every learning rate must exceed lr_floor > 0");
        }
        if (!(lr_floor > 0.0)) throw std::invalid_argument("train: lr_floor must be positive");
        if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train: betas must be in [0, 1)");
        if (!(eps > 0.0) || weight_decay < 0.0) throw std::invalid_argument("train: eps must be positive, weight_decay non-negative");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = nlohmann::json{{"pretrain_epochs", c.pretrain_epochs},
                       {"adapter_epochs", c.adapter_epochs},
                       {"lr_adapter", c.lr_adapter},
                       {"lr_decoder", c.lr_decoder},
                       {"lr_pretrain", c.lr_pretrain},
                       {"gamma", c.gamma},
                       {"lr_floor", c.lr_floor},
                       {"batch_size", c.batch_size},
                       {"init_seed", c.init_seed},
                       {"data_order_seed", c.data_order_seed},
                       {"weight_decay", c.weight_decay},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"eps", c.eps},
                       {"max_train_samples", c.max_train_samples},
                       {"workers", c.workers}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c)
{
    const TrainConfig d;
    c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
    c.adapter_epochs = j.value("adapter_epochs", d.adapter_epochs);
    c.lr_adapter = j.value("lr_adapter", d.lr_adapter);
    c.lr_decoder = j.value("lr_decoder", d.lr_decoder);
    c.lr_pretrain = j.value("lr_pretrain", d.lr_pretrain);
    c.gamma = j.value("gamma", d.gamma);
    c.lr_floor = j.value("lr_floor", d.lr_floor);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.init_seed = j.value("init_seed", d.init_seed);
    c.data_order_seed = j.value("data_order_seed", d.data_order_seed);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.eps = j.value("eps", d.eps);
    c.max_train_samples = j.value("max_train_samples", d.max_train_samples);
    c.workers = j.value("workers", d.workers);
}

/// Model and training settings read from one JSON file:
/// {"model": {...}, "train": {...}}; missing keys keep their defaults.
struct RunConfig {
    model::ModelConfig model;
    TrainConfig train;
};

inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    RunConfig rc;
    if (j.contains("model")) rc.model = j.at("model").get<model::ModelConfig>();
    if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
    rc.model.validate();
    rc.train.validate();
    return rc;
}

inline nlohmann::json to_json(const RunConfig& rc) { return nlohmann::json{{"model", rc.model}, {"train", rc.train}}; }

/// Learning rate of epoch `epoch` (0-based): base * gamma^epoch, never below
/// the floor.
inline double scheduled_lr(double base, double gamma, double floor, std::size_t epoch)
{
    return std::max(floor, base * std::pow(gamma, static_cast<double>(epoch)));
}

}  // namespace mugat::harness
