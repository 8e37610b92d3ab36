#include "actconv/gradsuite.hpp"

#include <cmath>
#include <vector>

#include "actconv/acu.hpp"
#include "actconv/interp.hpp"
#include "actconv/nn.hpp"
#include "actconv/refconv.hpp"
#include "actconv/rng.hpp"

namespace actconv {

namespace {

static_assert(sizeof(Point) == 2 * sizeof(double),
              "position blocks are viewed as flat double spans");

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.data()[i] = lo + (hi - lo) * rng.uniform01();
    }
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.data()[i] = rng.normal(0.0, stddev);
    }
}

/// Head weights centered at 1 so the bias gradient (their plain sum)
/// stays well away from zero.
Tensor make_head(std::int64_t n, std::int64_t c, std::int64_t h,
                 std::int64_t w, Rng& rng) {
    Tensor r(n, c, h, w);
    for (std::int64_t i = 0; i < r.size(); ++i) {
        r.data()[i] = 1.0 + 0.5 * rng.normal();
    }
    return r;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        s += a.data()[i] * b.data()[i];
    }
    return s;
}

}  // namespace

GradReport check_interp_instance(std::uint64_t seed) {
    Rng rng(seed);
    CornerSample s;
    s.q11 = rng.uniform01();
    s.q12 = rng.uniform01();
    s.q21 = rng.uniform01();
    s.q22 = rng.uniform01();
    // Keep the sample comfortably inside the cell.
    std::vector<double> theta = {0.05 + 0.9 * rng.uniform01(),
                                 0.05 + 0.9 * rng.uniform01()};

    auto f = [&](const std::vector<double>& t) {
        CornerSample c = s;
        c.d_alpha = t[0];
        c.d_beta = t[1];
        return bilerp(c);
    };

    s.d_alpha = theta[0];
    s.d_beta = theta[1];
    const PositionPartials pp = bilerp_position_partials(s);
    const double analytic[2] = {pp.d_alpha, pp.d_beta};

    GradReport rep;
    rep.tol = 1e-6;
    for (std::size_t i = 0; i < 2; ++i) {
        const double numeric = central_diff(f, theta, i, 1e-5);
        const double e = std::abs(analytic[i] - numeric) /
                         std::max({std::abs(analytic[i]), std::abs(numeric),
                                   1e-8});
        ++rep.checked;
        if (e > rep.max_rel_err) {
            rep.max_rel_err = e;
            rep.worst_coordinate = i == 0 ? "d_alpha" : "d_beta";
            rep.analytic = analytic[i];
            rep.numeric = numeric;
        }
    }
    rep.pass = rep.max_rel_err < rep.tol;
    return rep;
}

GradReport check_conv_instance(std::uint64_t seed) {
    Rng rng(seed);
    const std::int64_t N = 1 + rng.uniform_int(2);
    const std::int64_t C = 1 + rng.uniform_int(3);
    const std::int64_t D = 1 + rng.uniform_int(2);
    const int k = rng.uniform01() < 0.5 ? 1 : 3;
    const std::int64_t H = 4 + rng.uniform_int(4);
    const std::int64_t W = 4 + rng.uniform_int(4);

    ConvParams p;
    p.weights = Tensor(D, C, k, k);
    fill_normal(p.weights, rng, 0.5);
    p.bias.resize(static_cast<std::size_t>(D));
    for (double& b : p.bias) b = 0.2 * rng.normal();
    p.stride = 1 + static_cast<int>(rng.uniform_int(2));
    p.pad = static_cast<int>(rng.uniform_int(2));
    p.dilation = 1;

    Tensor x(N, C, H, W);
    fill_uniform(x, rng, 0.2, 1.2);
    const Tensor y0 = conv2d(x, p);
    const Tensor r = make_head(y0.n(), y0.c(), y0.h(), y0.w(), rng);

    const ConvGradients g = conv2d_backward(x, p, r);

    auto loss = [&]() { return dot(conv2d(x, p), r); };
    std::vector<ParamBlock> blocks = {
        {"weights", p.weights.data(), g.d_weights.data(), p.weights.size(),
         DiffMode::central, false},
        {"bias", p.bias.data(), g.d_bias.data(),
         static_cast<std::int64_t>(p.bias.size()), DiffMode::central, false},
        {"input", x.data(), g.d_input.data(), x.size(), DiffMode::central,
         false},
    };
    CheckOptions opt;
    // cancellation noise on small-gradient coordinates reaches ~5e-7 at
    // this loss scale; 1e-6 keeps the check tight but immune to it
    opt.tol = 1e-6;
    return check_gradients(loss, blocks, opt);
}

GradReport check_acu_instance(std::uint64_t seed, bool lattice_mode) {
    Rng rng(seed);
    const std::int64_t N = 1 + rng.uniform_int(2);
    const std::int64_t C = 1 + rng.uniform_int(3);
    const std::int64_t D = 1 + rng.uniform_int(2);
    const int kpick = static_cast<int>(rng.uniform_int(3));
    const std::int64_t H = 5 + rng.uniform_int(4);
    const std::int64_t W = 5 + rng.uniform_int(4);

    SynapsePositions init;
    if (kpick == 0) {
        init.points = {{0.0, 0.0}};
    } else if (kpick == 1) {
        // 5-point cross
        init.points = {{0.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0},
                       {0.0, -1.0}, {0.0, 1.0}};
    } else {
        init = grid3x3_positions();
    }
    init.origin_fixed = lattice_mode;
    if (!lattice_mode) {
        // Jitter every synapse well off the lattice: fractional part in
        // roughly [0.2, 0.45] on both axes, random sign.
        for (Point& pt : init.points) {
            pt.alpha += (rng.uniform01() < 0.5 ? -1.0 : 1.0) *
                        (0.2 + 0.25 * rng.uniform01());
            pt.beta += (rng.uniform01() < 0.5 ? -1.0 : 1.0) *
                       (0.2 + 0.25 * rng.uniform01());
        }
    }

    AcuLayer layer = make_acu_layer(
        static_cast<int>(C), static_cast<int>(D), init,
        1 + static_cast<int>(rng.uniform_int(2)),
        static_cast<int>(rng.uniform_int(2)), 1, rng);

    Tensor x(N, C, H, W);
    fill_uniform(x, rng, 0.2, 1.2);

    AcuCache cache;
    const Tensor y0 = acu_forward(x, layer, &cache);
    const Tensor r = make_head(y0.n(), y0.c(), y0.h(), y0.w(), rng);
    AcuGradients g = acu_backward(r, cache, layer);

    auto loss = [&]() { return dot(acu_forward(x, layer), r); };

    std::vector<ParamBlock> blocks = {
        {"weights", layer.weights.data(), g.d_weights.data(),
         layer.weights.size(), DiffMode::central, false},
        {"bias", layer.bias.data(), g.d_bias.data(),
         static_cast<std::int64_t>(layer.bias.size()), DiffMode::central,
         false},
        {"input", x.data(), g.d_input.data(), x.size(), DiffMode::central,
         false},
    };
    // Position block: the fixed origin takes no gradient, so skip its two
    // coordinates when pinned.
    const std::size_t skip = layer.positions[0].origin_fixed ? 1 : 0;
    const std::int64_t pos_n =
        2 * (static_cast<std::int64_t>(layer.positions[0].points.size()) -
             static_cast<std::int64_t>(skip));
    if (pos_n > 0) {
        blocks.push_back(
            {"positions",
             reinterpret_cast<double*>(layer.positions[0].points.data() + skip),
             reinterpret_cast<const double*>(g.d_positions[0].data() + skip),
             pos_n,
             lattice_mode ? DiffMode::forward_one_sided : DiffMode::central,
             !lattice_mode});
    }

    CheckOptions opt;
    opt.tol = 1e-5;
    // The r-weighted head keeps the loss linear in weights/bias/input, and
    // bilinear sampling is affine in any single position coordinate inside
    // a cell, so central/one-sided differences have no truncation term
    // here; a larger probe step only shrinks the roundoff noise.
    opt.h = 1e-4;
    return check_gradients(loss, blocks, opt);
}

GradReport check_network_instance(std::uint64_t seed) {
    Rng rng(seed);
    NetworkSpec spec = build_plain_network(0.25, 10, true);
    Network net = instantiate_network(spec, rng);

    // Move every synapse off the lattice so softmax loss stays smooth in
    // the probed position coordinates.
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::acu) continue;
        for (SynapsePositions& sp : net.params[i].acu.positions) {
            for (std::size_t k = sp.origin_fixed ? 1 : 0; k < sp.points.size();
                 ++k) {
                sp.points[k].alpha +=
                    (rng.uniform01() < 0.5 ? -1.0 : 1.0) *
                    (0.2 + 0.2 * rng.uniform01());
                sp.points[k].beta += (rng.uniform01() < 0.5 ? -1.0 : 1.0) *
                                     (0.2 + 0.2 * rng.uniform01());
            }
        }
    }

    Tensor x(2, 3, 8, 8);
    fill_uniform(x, rng, -1.0, 1.0);
    std::vector<int> labels = {static_cast<int>(rng.uniform_int(10)),
                               static_cast<int>(rng.uniform_int(10))};

    NetGradients grads;
    network_forward_backward(net, x, labels, grads);

    auto loss = [&]() { return network_loss(net, x, labels, true); };

    std::vector<ParamBlock> blocks;
    for (ParamRef& ref : learnable_params(net, &grads)) {
        blocks.push_back({ref.name, ref.value, ref.grad, ref.size,
                          DiffMode::central, false});
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::acu) continue;
        AcuLayer& a = net.params[i].acu;
        for (std::size_t gi = 0; gi < a.positions.size(); ++gi) {
            SynapsePositions& sp = a.positions[gi];
            const std::size_t skip = sp.origin_fixed ? 1 : 0;
            const std::int64_t pos_n =
                2 * (static_cast<std::int64_t>(sp.points.size()) -
                     static_cast<std::int64_t>(skip));
            if (pos_n <= 0) continue;
            blocks.push_back(
                {"node" + std::to_string(i) + ".acu.positions",
                 reinterpret_cast<double*>(sp.points.data() + skip),
                 reinterpret_cast<const double*>(grads.nodes[i].d_pos[gi].data() +
                                                 skip),
                 pos_n, DiffMode::central, true});
        }
    }
    CheckOptions opt;
    opt.tol = 1e-3;
    opt.abs_tol = 1e-9;  // biases feeding batch norm have provably zero grads
    opt.samples_per_block = 1;
    opt.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    return check_gradients(loss, blocks, opt);
}

}  // namespace actconv
