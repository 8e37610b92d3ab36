#pragma once

#include <cstdint>
#include <vector>

#include "actconv/interp.hpp"
#include "actconv/positions.hpp"
#include "actconv/refconv.hpp"
#include "actconv/rng.hpp"
#include "actconv/tensor.hpp"

namespace actconv {

/// Active Convolution Unit: a convolution whose K synapse displacements
/// are continuous learnable parameters, shared across all output units
/// of the layer (one independent set per group).
///
/// The sampling extent is fixed at construction from the initial
/// positions (their lattice bounding box), so output shapes stay static
/// while positions drift during training; drifted synapses sample the
/// zero-extended input wherever they land.
struct AcuLayer {
    int in_channels = 0;
    int out_channels = 0;
    int groups = 1;
    int stride = 1;
    int pad = 0;

    std::vector<SynapsePositions> positions;  // one per group, equal K
    Tensor weights;                           // out_ch x in_ch/groups x K x 1
    std::vector<double> bias;                 // out_ch

    double position_lr_scale = 0.01;
    /// Positions are clamped to [-clamp_radius, clamp_radius] per axis
    /// after each update; 0 means not yet configured (no clamping).
    double clamp_radius = 0.0;

    // Nominal lattice extent of the initial positions; fixes the output
    // shape rule (same as conv2d with an extent_h x extent_w window).
    std::int64_t lo_h = 0, hi_h = 0, lo_w = 0, hi_w = 0;

    int synapse_count() const { return positions.empty() ? 0 : positions[0].count(); }
    std::int64_t extent_h() const { return hi_h - lo_h + 1; }
    std::int64_t extent_w() const { return hi_w - lo_w + 1; }
    std::int64_t out_h(std::int64_t in_h) const {
        return conv_out_dim(in_h, extent_h(), pad, stride);
    }
    std::int64_t out_w(std::int64_t in_w) const {
        return conv_out_dim(in_w, extent_w(), pad, stride);
    }
    /// Learnable position scalars: 2 per synapse, minus the fixed origin.
    std::int64_t position_param_count() const;
};

/// Builds an ACU layer with He-initialized weights (fan_in = in_ch/groups * K),
/// zero bias, and every group starting from a copy of `init`.
AcuLayer make_acu_layer(int in_ch, int out_ch, const SynapsePositions& init,
                        int stride, int pad, int groups, Rng& rng);

SynapsePositions grid3x3_positions();
SynapsePositions dilated_positions(int dilation);
/// Validates a custom set: non-empty, finite coordinates, and origin
/// first when origin_fixed.
SynapsePositions custom_positions(std::vector<Point> pts, bool origin_fixed = true);

/// Forward state retained for the backward pass.
struct AcuCache {
    Tensor input;                          // copy of x
    Tensor cols;                           // N x (in/groups * K * groups) x OH x OW
    std::vector<std::vector<FracParts>> frac;  // [group][k] at forward time
    std::int64_t out_h = 0, out_w = 0;
};

/// ACU forward pass: y[n,d,m,mw] = bias[d] +
/// sum_c sum_k w[d,c,k] * bilerp(x at base(m,mw) + p_k).
/// Pass a cache to enable acu_backward.
Tensor acu_forward(const Tensor& x, const AcuLayer& layer,
                   AcuCache* cache = nullptr);

struct AcuGradients {
    Tensor d_weights;                          // same shape as weights
    std::vector<double> d_bias;                // out_ch
    std::vector<std::vector<Point>> d_positions;  // [group][k], raw (pre-normalization)
    Tensor d_input;                            // same shape as layer input
};

/// Analytic gradients for all four parameter blocks. d_input scatters
/// dy*w into the four corner lattice points with the bilinear corner
/// weights; out-of-bounds corners are dropped. d_positions[·][0] is
/// forced to (0,0) when the origin is fixed.
AcuGradients acu_backward(const Tensor& dy, const AcuCache& cache,
                          const AcuLayer& layer);

/// Rescales each synapse's (dL/dalpha, dL/dbeta) pair to unit Euclidean
/// norm; pairs with norm below 1e-12 map to (0,0), as does index 0 when
/// the origin is fixed.
std::vector<Point> normalize_position_gradient(const std::vector<Point>& g,
                                               bool origin_fixed);

/// Descends positions along the normalized gradient by
/// base_lr * position_lr_scale, then clamps to clamp_radius. No-op until
/// warmed_up; the fixed origin never moves.
void apply_position_update(AcuLayer& layer,
                           const std::vector<std::vector<Point>>& normalized,
                           double base_lr, bool warmed_up);

}  // namespace actconv
