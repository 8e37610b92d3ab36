#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "actconv/checkpoint.hpp"
#include "actconv/data.hpp"
#include "actconv/nn.hpp"
#include "actconv/optim.hpp"

namespace actconv {

/// Raised when the training loss goes non-finite; carries the iteration.
struct NanLossError : std::runtime_error {
    std::int64_t iteration;
    explicit NanLossError(std::int64_t it)
        : std::runtime_error("non-finite loss at iteration " +
                             std::to_string(it)),
          iteration(it) {}
};

/// Everything that evolves during training; loading a checkpoint restores
/// exactly this bundle, which is what makes resumed runs equal
/// uninterrupted ones.
struct TrainState {
    Network net;
    std::vector<std::vector<double>> velocities;  // learnable_params order
    PositionHistory history;
    Rng rng{0};
    std::int64_t iteration = 0;
};

/// Seeds the rng with cfg.seed, instantiates the network from it, and
/// zero-fills velocities. The same rng then drives batch sampling and
/// augmentation.
TrainState make_train_state(const NetworkSpec& spec, const TrainConfig& cfg);

TrainState train_state_from_checkpoint(const LoadedCheckpoint& ck);

struct TrainSummary {
    double final_loss = 0.0;
    double final_test_error = 0.0;
    /// CSV with header iter,lr,train_loss,test_error; one row at the end
    /// of every log_interval-th iteration. Reals are printed with %.17g,
    /// so identical runs produce identical bytes.
    std::string metrics_csv;
};

/// Runs iterations [state.iteration, cfg.total_iters). Per iteration:
/// sample a batch with replacement, optionally augment, forward/backward,
/// Nesterov step on weights (decay on convolution weights only), then the
/// normalized position step for every ACU node. Position snapshots are
/// taken before the first update and every log_interval iterations, plus
/// once after the final iteration. Throws NanLossError when the loss
/// leaves the reals.
TrainSummary train_loop(TrainState& state, const TrainConfig& cfg,
                        const Dataset& train, const Dataset& test);

}  // namespace actconv
