#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actconv/acu.hpp"

namespace actconv {

/// Training hyperparameters. Serialized as a flat key=value text file;
/// key names match the field names exactly.
struct TrainConfig {
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<std::int64_t> lr_drop_steps{32000, 48000};
    double lr_drop_factor = 0.1;
    std::int64_t total_iters = 64000;
    std::int64_t warmup_iters = 10000;
    std::int64_t batch_size = 128;
    double position_lr_scale = 0.01;
    std::uint64_t seed = 1;

    // Artifact knobs beyond the core schedule.
    std::int64_t log_interval = 100;
    std::int64_t eval_limit = 0;  // 0 = evaluate the whole test split
    bool augment = false;
};

/// Throws std::invalid_argument when a field is out of range (drops not
/// ascending, negative warmup, non-positive sizes...). Drop steps or a
/// warm-up horizon at or beyond total_iters are legal and inert, so a
/// shortened run can reuse the config of the full schedule.
void validate(const TrainConfig& cfg);

/// Parses key=value lines ('#' comments and blank lines ignored).
/// Unknown keys and malformed values throw std::invalid_argument.
TrainConfig parse_train_config(const std::string& text);
std::string serialize_train_config(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

/// Stepwise schedule: base_lr * factor^(number of drop steps <= iter).
double lr_at(const TrainConfig& cfg, std::int64_t iter);

/// Nesterov momentum update over a flat span:
///   g  <- grad + decay * param
///   v' <- momentum * v - lr * g
///   p' <- p + momentum * v' - lr * g
void sgd_nesterov_step(double* param, const double* grad, double* velocity,
                       std::int64_t count, double lr, double momentum,
                       double decay);

/// Position update for one ACU layer at iteration `iter`: normalizes the
/// raw per-synapse gradients to unit length and descends by
/// lr_at(cfg, iter) * cfg.position_lr_scale. Frozen (no-op) while
/// iter < warmup_iters. Positions take no momentum and no weight decay.
void position_step(AcuLayer& layer,
                   const std::vector<std::vector<Point>>& raw_pos_grad,
                   const TrainConfig& cfg, std::int64_t iter);

}  // namespace actconv
