#include "actconv/acu.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace actconv {

namespace {

void lattice_extent(const std::vector<SynapsePositions>& groups,
                    std::int64_t& lo_h, std::int64_t& hi_h, std::int64_t& lo_w,
                    std::int64_t& hi_w) {
    double min_a = 0.0, max_a = 0.0, min_b = 0.0, max_b = 0.0;
    bool first = true;
    for (const auto& sp : groups) {
        for (const auto& p : sp.points) {
            if (first) {
                min_a = max_a = p.alpha;
                min_b = max_b = p.beta;
                first = false;
            } else {
                min_a = std::min(min_a, p.alpha);
                max_a = std::max(max_a, p.alpha);
                min_b = std::min(min_b, p.beta);
                max_b = std::max(max_b, p.beta);
            }
        }
    }
    lo_h = static_cast<std::int64_t>(std::floor(min_a));
    hi_h = static_cast<std::int64_t>(std::ceil(max_a));
    lo_w = static_cast<std::int64_t>(std::floor(min_b));
    hi_w = static_cast<std::int64_t>(std::ceil(max_b));
}

}  // namespace

std::int64_t AcuLayer::position_param_count() const {
    std::int64_t total = 0;
    for (const auto& sp : positions) {
        total += 2 * (sp.count() - (sp.origin_fixed ? 1 : 0));
    }
    return total;
}

SynapsePositions grid3x3_positions() { return lattice_positions(3, 3, 1); }

SynapsePositions dilated_positions(int dilation) {
    return lattice_positions(3, 3, dilation);
}

SynapsePositions custom_positions(std::vector<Point> pts, bool origin_fixed) {
    if (pts.empty()) {
        throw std::invalid_argument("custom_positions: empty position set");
    }
    for (const auto& p : pts) {
        if (!std::isfinite(p.alpha) || !std::isfinite(p.beta)) {
            throw std::invalid_argument("custom_positions: non-finite coordinate");
        }
    }
    if (origin_fixed && (pts[0].alpha != 0.0 || pts[0].beta != 0.0)) {
        throw std::invalid_argument(
            "custom_positions: origin-fixed set must start at (0,0)");
    }
    SynapsePositions sp;
    sp.points = std::move(pts);
    sp.origin_fixed = origin_fixed;
    return sp;
}

AcuLayer make_acu_layer(int in_ch, int out_ch, const SynapsePositions& init,
                        int stride, int pad, int groups, Rng& rng) {
    if (in_ch < 1 || out_ch < 1 || groups < 1 || in_ch % groups != 0 ||
        out_ch % groups != 0) {
        throw std::invalid_argument("make_acu_layer: bad channel/group counts");
    }
    if (stride < 1 || pad < 0) {
        throw std::invalid_argument("make_acu_layer: bad stride/pad");
    }
    if (init.count() < 1) {
        throw std::invalid_argument("make_acu_layer: empty position set");
    }

    AcuLayer layer;
    layer.in_channels = in_ch;
    layer.out_channels = out_ch;
    layer.groups = groups;
    layer.stride = stride;
    layer.pad = pad;
    layer.positions.assign(static_cast<std::size_t>(groups), init);
    lattice_extent(layer.positions, layer.lo_h, layer.hi_h, layer.lo_w,
                   layer.hi_w);

    const int K = init.count();
    const int cg = in_ch / groups;
    layer.weights = Tensor(out_ch, cg, K, 1);
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cg) * K));
    for (std::int64_t i = 0; i < layer.weights.size(); ++i) {
        layer.weights.data()[i] = rng.normal(0.0, stddev);
    }
    layer.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
    return layer;
}

Tensor acu_forward(const Tensor& x, const AcuLayer& layer, AcuCache* cache) {
    if (x.c() != layer.in_channels) {
        throw std::invalid_argument("acu_forward: in_channels mismatch");
    }
    const int K = layer.synapse_count();
    if (layer.weights.n() != layer.out_channels ||
        layer.weights.c() != layer.in_channels / layer.groups ||
        layer.weights.h() != K) {
        throw std::invalid_argument("acu_forward: weight/position shape mismatch");
    }
    const std::int64_t OH = layer.out_h(x.h());
    const std::int64_t OW = layer.out_w(x.w());
    if (OH < 1 || OW < 1) {
        throw std::invalid_argument("acu_forward: output dims < 1");
    }

    const std::int64_t N = x.n(), H = x.h(), W = x.w();
    const int G = layer.groups;
    const std::int64_t cg = layer.in_channels / G;
    const std::int64_t dg = layer.out_channels / G;
    const std::int64_t rows = cg * K;  // per group

    std::vector<std::vector<FracParts>> frac(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) {
        frac[g].reserve(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            const Point& p = layer.positions[g].points[static_cast<std::size_t>(k)];
            frac[g].push_back(fractional_parts(p.alpha, p.beta));
        }
    }

    // Interpolated samples, one row per (group-local channel, synapse).
    Tensor cols(N, rows * G, OH, OW);
    for (std::int64_t n = 0; n < N; ++n) {
        for (int g = 0; g < G; ++g) {
            for (std::int64_t c = 0; c < cg; ++c) {
                const std::int64_t xc = static_cast<std::int64_t>(g) * cg + c;
                const double* xplane = x.data() + x.offset(n, xc, 0, 0);
                for (int k = 0; k < K; ++k) {
                    const FracParts& fp = frac[g][static_cast<std::size_t>(k)];
                    const double da = fp.d_alpha, db = fp.d_beta;
                    const std::int64_t row = g * rows + c * K + k;
                    double* out = cols.data() + cols.offset(n, row, 0, 0);
                    if (da == 0.0 && db == 0.0) {
                        // On-lattice synapse: plain gather, no corner math.
                        for (std::int64_t oh = 0; oh < OH; ++oh) {
                            const std::int64_t ih =
                                oh * layer.stride - layer.pad - layer.lo_h +
                                fp.floor_alpha;
                            double* orow = out + oh * OW;
                            if (ih < 0 || ih >= H) {
                                for (std::int64_t ow = 0; ow < OW; ++ow) {
                                    orow[ow] = 0.0;
                                }
                                continue;
                            }
                            const double* xrow = xplane + ih * W;
                            for (std::int64_t ow = 0; ow < OW; ++ow) {
                                const std::int64_t iw =
                                    ow * layer.stride - layer.pad - layer.lo_w +
                                    fp.floor_beta;
                                orow[ow] =
                                    (iw >= 0 && iw < W) ? xrow[iw] : 0.0;
                            }
                        }
                        continue;
                    }
                    const double w11 = (1.0 - da) * (1.0 - db);
                    const double w21 = da * (1.0 - db);
                    const double w12 = (1.0 - da) * db;
                    const double w22 = da * db;
                    for (std::int64_t oh = 0; oh < OH; ++oh) {
                        const std::int64_t h1 =
                            oh * layer.stride - layer.pad - layer.lo_h +
                            fp.floor_alpha;
                        const std::int64_t h2 = h1 + 1;
                        const double* r1 =
                            (h1 >= 0 && h1 < H) ? xplane + h1 * W : nullptr;
                        const double* r2 =
                            (h2 >= 0 && h2 < H) ? xplane + h2 * W : nullptr;
                        double* orow = out + oh * OW;
                        for (std::int64_t ow = 0; ow < OW; ++ow) {
                            const std::int64_t w1 =
                                ow * layer.stride - layer.pad - layer.lo_w +
                                fp.floor_beta;
                            const std::int64_t w2 = w1 + 1;
                            const bool in1 = w1 >= 0 && w1 < W;
                            const bool in2 = w2 >= 0 && w2 < W;
                            const double q11 = (r1 && in1) ? r1[w1] : 0.0;
                            const double q12 = (r1 && in2) ? r1[w2] : 0.0;
                            const double q21 = (r2 && in1) ? r2[w1] : 0.0;
                            const double q22 = (r2 && in2) ? r2[w2] : 0.0;
                            orow[ow] =
                                q11 * w11 + q21 * w21 + q12 * w12 + q22 * w22;
                        }
                    }
                }
            }
        }
    }

    Tensor y(N, layer.out_channels, OH, OW);
    const std::int64_t plane = OH * OW;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t d = 0; d < layer.out_channels; ++d) {
            const int g = static_cast<int>(d / dg);
            double* yrow = y.data() + y.offset(n, d, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
                yrow[i] = layer.bias[static_cast<std::size_t>(d)];
            }
            const double* wrow = layer.weights.data() + layer.weights.offset(d, 0, 0, 0);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double wv = wrow[r];
                if (wv == 0.0) continue;
                const double* crow =
                    cols.data() + cols.offset(n, g * rows + r, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) {
                    yrow[i] += wv * crow[i];
                }
            }
        }
    }

    if (cache) {
        cache->input = x;
        cache->cols = std::move(cols);
        cache->frac = std::move(frac);
        cache->out_h = OH;
        cache->out_w = OW;
    }
    return y;
}

AcuGradients acu_backward(const Tensor& dy, const AcuCache& cache,
                          const AcuLayer& layer) {
    const Tensor& x = cache.input;
    const int K = layer.synapse_count();
    const std::int64_t OH = cache.out_h, OW = cache.out_w;
    if (dy.n() != x.n() || dy.c() != layer.out_channels || dy.h() != OH ||
        dy.w() != OW) {
        throw std::invalid_argument("acu_backward: dy/cache shape mismatch");
    }
    if (cache.cols.n() != x.n() ||
        cache.cols.c() != (layer.in_channels / layer.groups) *
                              static_cast<std::int64_t>(K) * layer.groups) {
        throw std::invalid_argument("acu_backward: stale cache");
    }

    const std::int64_t N = x.n(), H = x.h(), W = x.w();
    const int G = layer.groups;
    const std::int64_t cg = layer.in_channels / G;
    const std::int64_t dg = layer.out_channels / G;
    const std::int64_t rows = cg * K;
    const std::int64_t plane = OH * OW;

    AcuGradients grad;
    grad.d_weights = Tensor(layer.out_channels, cg, K, 1);
    grad.d_bias.assign(static_cast<std::size_t>(layer.out_channels), 0.0);
    grad.d_positions.assign(static_cast<std::size_t>(G),
                            std::vector<Point>(static_cast<std::size_t>(K)));
    grad.d_input = Tensor(N, layer.in_channels, H, W);

    // d_bias and d_weights from the cached interpolated samples.
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t d = 0; d < layer.out_channels; ++d) {
            const int g = static_cast<int>(d / dg);
            const double* dyrow = dy.data() + dy.offset(n, d, 0, 0);
            double bsum = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) bsum += dyrow[i];
            grad.d_bias[static_cast<std::size_t>(d)] += bsum;
            double* dwrow =
                grad.d_weights.data() + grad.d_weights.offset(d, 0, 0, 0);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* crow =
                    cache.cols.data() + cache.cols.offset(n, g * rows + r, 0, 0);
                double s = 0.0;
                for (std::int64_t i = 0; i < plane; ++i) s += dyrow[i] * crow[i];
                dwrow[r] += s;
            }
        }
    }

    // Per-sample gradient w.r.t. each interpolated sample:
    // gcol[row] = sum_d w[d,row] * dy[d]  (Eq. of the chain through w).
    // Scattered into d_input with the corner weights and contracted with
    // the corner differences for d_positions.
    Tensor gcol(1, rows * G, OH, OW);
    for (std::int64_t n = 0; n < N; ++n) {
        gcol.fill(0.0);
        for (std::int64_t d = 0; d < layer.out_channels; ++d) {
            const int g = static_cast<int>(d / dg);
            const double* dyrow = dy.data() + dy.offset(n, d, 0, 0);
            const double* wrow =
                layer.weights.data() + layer.weights.offset(d, 0, 0, 0);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double wv = wrow[r];
                if (wv == 0.0) continue;
                double* grow = gcol.data() + gcol.offset(0, g * rows + r, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) {
                    grow[i] += wv * dyrow[i];
                }
            }
        }

        for (int g = 0; g < G; ++g) {
            for (std::int64_t c = 0; c < cg; ++c) {
                const std::int64_t xc = static_cast<std::int64_t>(g) * cg + c;
                const double* xplane = x.data() + x.offset(n, xc, 0, 0);
                double* dxplane =
                    grad.d_input.data() + grad.d_input.offset(n, xc, 0, 0);
                for (int k = 0; k < K; ++k) {
                    const FracParts& fp = cache.frac[g][static_cast<std::size_t>(k)];
                    const double da = fp.d_alpha, db = fp.d_beta;
                    const double w11 = (1.0 - da) * (1.0 - db);
                    const double w21 = da * (1.0 - db);
                    const double w12 = (1.0 - da) * db;
                    const double w22 = da * db;
                    const double* grow =
                        gcol.data() + gcol.offset(0, g * rows + c * K + k, 0, 0);
                    double dpa = 0.0, dpb = 0.0;
                    for (std::int64_t oh = 0; oh < OH; ++oh) {
                        const std::int64_t h1 =
                            oh * layer.stride - layer.pad - layer.lo_h +
                            fp.floor_alpha;
                        const std::int64_t h2 = h1 + 1;
                        const bool rin1 = h1 >= 0 && h1 < H;
                        const bool rin2 = h2 >= 0 && h2 < H;
                        const double* r1 = rin1 ? xplane + h1 * W : nullptr;
                        const double* r2 = rin2 ? xplane + h2 * W : nullptr;
                        double* d1 = rin1 ? dxplane + h1 * W : nullptr;
                        double* d2 = rin2 ? dxplane + h2 * W : nullptr;
                        const double* gr = grow + oh * OW;
                        for (std::int64_t ow = 0; ow < OW; ++ow) {
                            const double gv = gr[ow];
                            const std::int64_t w1 =
                                ow * layer.stride - layer.pad - layer.lo_w +
                                fp.floor_beta;
                            const std::int64_t w2 = w1 + 1;
                            const bool in1 = w1 >= 0 && w1 < W;
                            const bool in2 = w2 >= 0 && w2 < W;
                            const double q11 = (r1 && in1) ? r1[w1] : 0.0;
                            const double q12 = (r1 && in2) ? r1[w2] : 0.0;
                            const double q21 = (r2 && in1) ? r2[w1] : 0.0;
                            const double q22 = (r2 && in2) ? r2[w2] : 0.0;
                            dpa += gv * ((1.0 - db) * (q21 - q11) +
                                         db * (q22 - q12));
                            dpb += gv * ((1.0 - da) * (q12 - q11) +
                                         da * (q22 - q21));
                            if (gv == 0.0) continue;
                            if (d1 && in1) d1[w1] += gv * w11;
                            if (d1 && in2) d1[w2] += gv * w12;
                            if (d2 && in1) d2[w1] += gv * w21;
                            if (d2 && in2) d2[w2] += gv * w22;
                        }
                    }
                    auto& dp = grad.d_positions[static_cast<std::size_t>(g)]
                                               [static_cast<std::size_t>(k)];
                    dp.alpha += dpa;
                    dp.beta += dpb;
                }
            }
        }
    }

    for (int g = 0; g < G; ++g) {
        if (layer.positions[static_cast<std::size_t>(g)].origin_fixed) {
            grad.d_positions[static_cast<std::size_t>(g)][0] = {0.0, 0.0};
        }
    }
    return grad;
}

std::vector<Point> normalize_position_gradient(const std::vector<Point>& g,
                                               bool origin_fixed) {
    constexpr double kEps = 1e-12;
    std::vector<Point> out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (k == 0 && origin_fixed) {
            out[k] = {0.0, 0.0};
            continue;
        }
        const double z = std::sqrt(g[k].alpha * g[k].alpha + g[k].beta * g[k].beta);
        if (z < kEps) {
            out[k] = {0.0, 0.0};
        } else {
            out[k] = {g[k].alpha / z, g[k].beta / z};
        }
    }
    return out;
}

void apply_position_update(AcuLayer& layer,
                           const std::vector<std::vector<Point>>& normalized,
                           double base_lr, bool warmed_up) {
    if (!warmed_up) return;
    if (normalized.size() != layer.positions.size()) {
        throw std::invalid_argument("apply_position_update: group count mismatch");
    }
    const double step = base_lr * layer.position_lr_scale;
    for (std::size_t g = 0; g < layer.positions.size(); ++g) {
        auto& sp = layer.positions[g];
        if (normalized[g].size() != sp.points.size()) {
            throw std::invalid_argument("apply_position_update: K mismatch");
        }
        for (std::size_t k = 0; k < sp.points.size(); ++k) {
            if (k == 0 && sp.origin_fixed) continue;
            Point& p = sp.points[k];
            p.alpha -= step * normalized[g][k].alpha;
            p.beta -= step * normalized[g][k].beta;
            if (layer.clamp_radius > 0.0) {
                p.alpha = std::clamp(p.alpha, -layer.clamp_radius,
                                     layer.clamp_radius);
                p.beta = std::clamp(p.beta, -layer.clamp_radius,
                                    layer.clamp_radius);
            }
        }
    }
}

}  // namespace actconv
