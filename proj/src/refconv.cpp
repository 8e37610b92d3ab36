#include "actconv/refconv.hpp"

#include <stdexcept>

namespace actconv {

namespace {

void validate(const Tensor& x, const ConvParams& p, std::int64_t& out_h,
              std::int64_t& out_w) {
    const std::int64_t kh = p.weights.h(), kw = p.weights.w();
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel dims must be odd");
    }
    if (p.weights.c() != x.c()) {
        throw std::invalid_argument("conv2d: in_channels mismatch");
    }
    if (static_cast<std::int64_t>(p.bias.size()) != p.weights.n()) {
        throw std::invalid_argument("conv2d: bias size mismatch");
    }
    if (p.stride < 1 || p.dilation < 1 || p.pad < 0) {
        throw std::invalid_argument("conv2d: bad stride/pad/dilation");
    }
    const std::int64_t eff_h = static_cast<std::int64_t>(p.dilation) * (kh - 1) + 1;
    const std::int64_t eff_w = static_cast<std::int64_t>(p.dilation) * (kw - 1) + 1;
    out_h = conv_out_dim(x.h(), eff_h, p.pad, p.stride);
    out_w = conv_out_dim(x.w(), eff_w, p.pad, p.stride);
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("conv2d: output dims < 1");
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    std::int64_t out_h = 0, out_w = 0;
    validate(x, p, out_h, out_w);

    const std::int64_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const std::int64_t D = p.weights.n(), kh = p.weights.h(), kw = p.weights.w();
    const std::int64_t rh = (kh - 1) / 2, rw = (kw - 1) / 2;
    const std::int64_t taps = kh * kw, rows = C * taps;
    const std::int64_t plane = out_h * out_w;

    // Gather one padded row per (channel, tap), then accumulate the
    // weighted rows over contiguous spans. Taps are visited in the same
    // (c, i, j) order either way; this only removes the per-element bounds
    // arithmetic from the hot loop.
    Tensor y(N, D, out_h, out_w);
    std::vector<double> cols(static_cast<std::size_t>(rows * plane));
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* xplane = x.data() + x.offset(n, c, 0, 0);
            for (std::int64_t i = -rh; i <= rh; ++i) {
                for (std::int64_t j = -rw; j <= rw; ++j) {
                    double* out =
                        cols.data() +
                        ((c * kh + (i + rh)) * kw + (j + rw)) * plane;
                    for (std::int64_t oh = 0; oh < out_h; ++oh) {
                        const std::int64_t ih =
                            oh * p.stride - p.pad + (rh + i) * p.dilation;
                        double* orow = out + oh * out_w;
                        if (ih < 0 || ih >= H) {
                            for (std::int64_t ow = 0; ow < out_w; ++ow) {
                                orow[ow] = 0.0;
                            }
                            continue;
                        }
                        const double* xrow = xplane + ih * W;
                        for (std::int64_t ow = 0; ow < out_w; ++ow) {
                            const std::int64_t iw =
                                ow * p.stride - p.pad + (rw + j) * p.dilation;
                            orow[ow] = (iw >= 0 && iw < W) ? xrow[iw] : 0.0;
                        }
                    }
                }
            }
        }
        for (std::int64_t d = 0; d < D; ++d) {
            double* yrow = y.data() + y.offset(n, d, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
                yrow[i] = p.bias[static_cast<std::size_t>(d)];
            }
            const double* wrow = p.weights.data() + p.weights.offset(d, 0, 0, 0);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double wv = wrow[r];
                if (wv == 0.0) continue;
                const double* crow = cols.data() + r * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    yrow[i] += wv * crow[i];
                }
            }
        }
    }
    return y;
}

ConvGradients conv2d_backward(const Tensor& x, const ConvParams& p,
                              const Tensor& dy) {
    std::int64_t out_h = 0, out_w = 0;
    validate(x, p, out_h, out_w);
    if (dy.n() != x.n() || dy.c() != p.weights.n() || dy.h() != out_h ||
        dy.w() != out_w) {
        throw std::invalid_argument("conv2d_backward: dy shape mismatch");
    }

    const std::int64_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const std::int64_t D = p.weights.n(), kh = p.weights.h(), kw = p.weights.w();
    const std::int64_t rh = (kh - 1) / 2, rw = (kw - 1) / 2;

    ConvGradients g;
    g.d_weights = Tensor(D, C, kh, kw);
    g.d_bias.assign(static_cast<std::size_t>(D), 0.0);
    g.d_input = Tensor(N, C, H, W);

    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t d = 0; d < D; ++d) {
            const double* dyrow = dy.data() + dy.offset(n, d, 0, 0);
            for (std::int64_t i = 0; i < out_h * out_w; ++i) {
                g.d_bias[static_cast<std::size_t>(d)] += dyrow[i];
            }
            for (std::int64_t c = 0; c < C; ++c) {
                for (std::int64_t i = -rh; i <= rh; ++i) {
                    for (std::int64_t j = -rw; j <= rw; ++j) {
                        const double wv = p.weights(d, c, i + rh, j + rw);
                        double dw = 0.0;
                        for (std::int64_t oh = 0; oh < out_h; ++oh) {
                            const std::int64_t ih =
                                oh * p.stride - p.pad + (rh + i) * p.dilation;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = x.data() + x.offset(n, c, ih, 0);
                            double* dxrow = g.d_input.data() +
                                            g.d_input.offset(n, c, ih, 0);
                            const double* dyr = dyrow + oh * out_w;
                            for (std::int64_t ow = 0; ow < out_w; ++ow) {
                                const std::int64_t iw =
                                    ow * p.stride - p.pad + (rw + j) * p.dilation;
                                if (iw < 0 || iw >= W) continue;
                                dw += dyr[ow] * xrow[iw];
                                dxrow[iw] += dyr[ow] * wv;
                            }
                        }
                        g.d_weights(d, c, i + rh, j + rw) += dw;
                    }
                }
            }
        }
    }
    return g;
}

SynapsePositions lattice_positions(int kh, int kw, int dilation) {
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
        throw std::invalid_argument("lattice_positions: kernel dims must be odd");
    }
    if (dilation < 1) {
        throw std::invalid_argument("lattice_positions: dilation must be >= 1");
    }
    SynapsePositions sp;
    sp.origin_fixed = true;
    sp.points.reserve(static_cast<std::size_t>(kh) * kw);
    sp.points.push_back({0.0, 0.0});
    const int rh = (kh - 1) / 2, rw = (kw - 1) / 2;
    for (int i = -rh; i <= rh; ++i) {
        for (int j = -rw; j <= rw; ++j) {
            if (i == 0 && j == 0) continue;
            sp.points.push_back({static_cast<double>(i * dilation),
                                 static_cast<double>(j * dilation)});
        }
    }
    return sp;
}

}  // namespace actconv
