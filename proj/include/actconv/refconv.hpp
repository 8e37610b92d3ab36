#pragma once

#include <cstdint>
#include <vector>

#include "actconv/positions.hpp"
#include "actconv/tensor.hpp"

namespace actconv {

/// Conventional 2-D convolution parameters. Kernel dims must be odd:
/// taps run over centered offsets {-(k-1)/2 .. (k-1)/2} scaled by
/// dilation, with explicit zero padding.
struct ConvParams {
    Tensor weights;             // out_ch x in_ch x kh x kw
    std::vector<double> bias;   // out_ch
    int stride = 1;
    int pad = 0;
    int dilation = 1;
};

/// Output spatial extent of a window of effective size eff over an input
/// of size in with the given pad and stride.
inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t eff,
                                 std::int64_t pad, std::int64_t stride) {
    return (in + 2 * pad - eff) / stride + 1;
}

/// Zero-padded 2-D convolution. Output is
/// N x out_ch x conv_out_dim(H) x conv_out_dim(W) with
/// eff_k = dilation*(k-1)+1. Pure function; serves as the correctness
/// oracle the ACU must reproduce at integer positions.
Tensor conv2d(const Tensor& x, const ConvParams& p);

struct ConvGradients {
    Tensor d_weights;
    std::vector<double> d_bias;
    Tensor d_input;
};

/// Analytic gradients of conv2d for upstream gradient dy.
ConvGradients conv2d_backward(const Tensor& x, const ConvParams& p,
                              const Tensor& dy);

/// The centered integer tap grid of a kh x kw kernel scaled by dilation,
/// reordered so the origin tap comes first and the remaining taps follow
/// row-major grid order. Kernel dims must be odd.
SynapsePositions lattice_positions(int kh, int kw, int dilation);

}  // namespace actconv
