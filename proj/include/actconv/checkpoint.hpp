#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actconv/nn.hpp"

namespace actconv {

/// One sampled snapshot of every ACU position in the network, flattened
/// in node order as (group, synapse) -> alpha, beta.
struct PositionSnapshot {
    std::int64_t iter = 0;
    std::vector<double> values;
};

struct PositionHistory {
    std::vector<PositionSnapshot> entries;
};

/// Current positions of every ACU node, in the snapshot layout.
std::vector<double> flatten_positions(const Network& net);

/// Versioned little-endian binary: magic, version, iteration, network
/// spec text, rng state text, length-prefixed named tensors (parameters,
/// batch-norm running statistics, ACU positions and extents, optimizer
/// velocities), then the position history. Tensor payloads are raw
/// doubles, so load(save(x)) is bitwise x.
void save_checkpoint(const std::string& path, const Network& net,
                     const std::vector<std::vector<double>>& velocities,
                     std::int64_t iteration, const std::string& rng_state,
                     const PositionHistory& history);

struct LoadedCheckpoint {
    Network net;
    std::vector<std::vector<double>> velocities;  // learnable_params order
    std::int64_t iteration = 0;
    std::string rng_state;
    PositionHistory history;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace actconv
