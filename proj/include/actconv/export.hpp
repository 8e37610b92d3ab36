#pragma once

#include <string>
#include <vector>

#include "actconv/checkpoint.hpp"
#include "actconv/nn.hpp"
#include "actconv/positions.hpp"

namespace actconv {

/// Trajectory CSV with columns exactly layer,synapse,iter,alpha,beta.
/// `layer` is the node index of the ACU in the network spec; `synapse`
/// is group * K + k. Rows are grouped per (layer, synapse) with iters
/// ascending. Reals use %.17g so the CSV round-trips doubles exactly.
std::string trajectory_csv(const NetworkSpec& spec,
                           const PositionHistory& history);

/// One scatter panel: a layer's initial positions (reference crosses)
/// and its current positions (dots).
struct LayerScatter {
    int layer = 0;
    std::vector<Point> init;
    std::vector<Point> final_pos;
};

/// Panels from a live network: init from each ACU's declared position
/// initialization, finals from its current positions (groups
/// concatenated).
std::vector<LayerScatter> scatter_from_network(const Network& net);

/// Panels reconstructed from a trajectory CSV: init = rows at the
/// earliest iter, finals = rows at the latest.
std::vector<LayerScatter> scatter_from_trajectory_csv(const std::string& csv);

/// Fixed-size side-by-side panels, integer gridlines, crosses for the
/// initial grid, dots for learned positions. Purely deterministic output.
std::string positions_svg(const std::vector<LayerScatter>& panels);

}  // namespace actconv
