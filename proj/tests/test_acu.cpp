#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <actconv/acu.hpp>
#include <actconv/refconv.hpp>
#include <actconv/rng.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace actconv;

namespace {

Tensor filled(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
              Rng& rng) {
    Tensor t(n, c, h, w);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.data()[i] = rng.normal(0.0, 1.0);
    return t;
}

// Builds the dense odd-kernel twin of an ACU whose positions sit on the
// integer lattice, copying weight k to the matching kernel tap.
ConvParams conv_twin(const AcuLayer& acu, int kernel, int dilation) {
    ConvParams p;
    p.weights = Tensor(acu.out_channels, acu.in_channels, kernel, kernel);
    p.bias = acu.bias;
    p.stride = acu.stride;
    p.pad = acu.pad;
    p.dilation = dilation;
    const int r = (kernel - 1) / 2;
    const auto& pts = acu.positions[0].points;
    for (std::int64_t d = 0; d < acu.out_channels; ++d)
        for (std::int64_t c = 0; c < acu.in_channels; ++c)
            for (std::size_t k = 0; k < pts.size(); ++k) {
                std::int64_t ki = static_cast<std::int64_t>(pts[k].alpha) / dilation + r;
                std::int64_t kj = static_cast<std::int64_t>(pts[k].beta) / dilation + r;
                p.weights(d, c, ki, kj) = acu.weights(d, c, static_cast<std::int64_t>(k), 0);
            }
    return p;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    CHECK(worst < tol);
}

}  // namespace

TEST_CASE("single synapse at (0.5, 0.5) averages the four neighbors") {
    Tensor x(1, 1, 3, 3);
    for (std::int64_t i = 0; i < 9; ++i) x.data()[i] = static_cast<double>(i + 1);
    Rng rng(1);
    AcuLayer layer =
        make_acu_layer(1, 1, custom_positions({{0.5, 0.5}}, false), 1, 0, 1, rng);
    layer.weights.fill(1.0);
    layer.bias[0] = 0.0;
    CHECK(layer.extent_h() == 2);
    CHECK(layer.extent_w() == 2);
    Tensor y = acu_forward(x, layer);
    REQUIRE(y.h() == 2);
    REQUIRE(y.w() == 2);
    CHECK(y(0, 0, 0, 0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(y(0, 0, 0, 1) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(y(0, 0, 1, 0) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(y(0, 0, 1, 1) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("grid init matches a 3x3 convolution exactly") {
    Rng rng(2);
    Tensor x = filled(2, 3, 7, 6, rng);
    AcuLayer layer = make_acu_layer(3, 4, grid3x3_positions(), 1, 1, 1, rng);
    ConvParams twin = conv_twin(layer, 3, 1);

    Tensor y_acu = acu_forward(x, layer);
    Tensor y_conv = conv2d(x, twin);
    check_close(y_acu, y_conv, 1e-9);

    // gradients agree too
    Tensor dy = filled(y_acu.n(), y_acu.c(), y_acu.h(), y_acu.w(), rng);
    AcuCache cache;
    acu_forward(x, layer, &cache);
    AcuGradients ga = acu_backward(dy, cache, layer);
    ConvGradients gc = conv2d_backward(x, twin, dy);
    check_close(ga.d_input, gc.d_input, 1e-6);
    for (std::size_t i = 0; i < ga.d_bias.size(); ++i)
        CHECK(ga.d_bias[i] == doctest::Approx(gc.d_bias[i]).epsilon(1e-10));
    const auto& pts = layer.positions[0].points;
    for (std::int64_t d = 0; d < 4; ++d)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t k = 0; k < 9; ++k) {
                std::int64_t ki = static_cast<std::int64_t>(pts[k].alpha) + 1;
                std::int64_t kj = static_cast<std::int64_t>(pts[k].beta) + 1;
                CHECK(std::abs(ga.d_weights(d, c, k, 0) - gc.d_weights(d, c, ki, kj)) <
                      1e-6);
            }
}

TEST_CASE("dilated init matches a dilation-2 convolution") {
    Rng rng(3);
    Tensor x = filled(1, 2, 9, 9, rng);
    AcuLayer layer = make_acu_layer(2, 3, dilated_positions(2), 1, 2, 1, rng);
    CHECK(layer.extent_h() == 5);
    ConvParams twin = conv_twin(layer, 3, 2);
    check_close(acu_forward(x, layer), conv2d(x, twin), 1e-9);
}

TEST_CASE("strided grid init matches a strided convolution") {
    Rng rng(4);
    Tensor x = filled(2, 2, 8, 9, rng);
    AcuLayer layer = make_acu_layer(2, 2, grid3x3_positions(), 2, 1, 1, rng);
    ConvParams twin = conv_twin(layer, 3, 1);
    Tensor y = acu_forward(x, layer);
    CHECK(y.h() == 4);
    CHECK(y.w() == 5);
    check_close(y, conv2d(x, twin), 1e-9);
}

TEST_CASE("five-point cross matches a 3x3 kernel with zeroed corners") {
    Rng rng(5);
    Tensor x = filled(1, 2, 6, 6, rng);
    SynapsePositions cross = custom_positions(
        {{0, 0}, {-1, 0}, {0, -1}, {0, 1}, {1, 0}}, true);
    AcuLayer layer = make_acu_layer(2, 2, cross, 1, 1, 1, rng);
    CHECK(layer.extent_h() == 3);
    CHECK(layer.extent_w() == 3);
    ConvParams twin = conv_twin(layer, 3, 1);  // corner taps stay zero
    check_close(acu_forward(x, layer), conv2d(x, twin), 1e-9);
}

TEST_CASE("K=1 at the origin matches a 1x1 convolution") {
    Rng rng(6);
    Tensor x = filled(2, 3, 5, 5, rng);
    AcuLayer layer =
        make_acu_layer(3, 2, custom_positions({{0.0, 0.0}}, true), 1, 0, 1, rng);
    ConvParams twin = conv_twin(layer, 1, 1);
    check_close(acu_forward(x, layer), conv2d(x, twin), 1e-9);
}

TEST_CASE("synapses drifting out of bounds read zeros") {
    Rng rng(7);
    Tensor x = filled(1, 1, 4, 4, rng);
    AcuLayer layer =
        make_acu_layer(1, 1, custom_positions({{0.0, 0.0}}, false), 1, 0, 1, rng);
    layer.positions[0].points[0] = {50.0, 50.0};  // way outside
    layer.weights.fill(1.0);
    layer.bias[0] = 0.25;
    Tensor y = acu_forward(x, layer);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.25);
}

TEST_CASE("output shape is fixed by the initial extent, not current positions") {
    Rng rng(8);
    AcuLayer layer = make_acu_layer(1, 1, grid3x3_positions(), 1, 1, 1, rng);
    Tensor x = filled(1, 1, 6, 6, rng);
    Tensor y0 = acu_forward(x, layer);
    // drift a synapse far outside the original 3x3 bounding box
    layer.positions[0].points[3] = {4.7, -3.9};
    Tensor y1 = acu_forward(x, layer);
    CHECK(y0.same_shape(y1));
    CHECK(layer.extent_h() == 3);
}

TEST_CASE("extent comes from the floor/ceil bounding box of the init") {
    Rng rng(9);
    AcuLayer layer = make_acu_layer(
        1, 1, custom_positions({{0.0, 0.0}, {2.3, -1.2}}, true), 1, 0, 1, rng);
    CHECK(layer.lo_h == 0);
    CHECK(layer.hi_h == 3);
    CHECK(layer.lo_w == -2);
    CHECK(layer.hi_w == 0);
    CHECK(layer.extent_h() == 4);
    CHECK(layer.extent_w() == 3);
}

TEST_CASE("grouped layers carry one position set per group") {
    Rng rng(10);
    AcuLayer layer = make_acu_layer(4, 6, grid3x3_positions(), 1, 1, 2, rng);
    REQUIRE(layer.positions.size() == 2);
    CHECK(layer.weights.n() == 6);
    CHECK(layer.weights.c() == 2);
    CHECK(layer.position_param_count() == 2 * 2 * 8);

    // moving only group 1's synapse must not affect group 0's channels
    Tensor x = filled(1, 4, 6, 6, rng);
    Tensor y0 = acu_forward(x, layer);
    layer.positions[1].points[2] = {0.37, -0.6};
    Tensor y1 = acu_forward(x, layer);
    for (std::int64_t d = 0; d < 3; ++d)
        for (std::int64_t i = 0; i < y0.h() * y0.w(); ++i)
            CHECK(y0.data()[d * y0.h() * y0.w() + i] ==
                  y1.data()[d * y1.h() * y1.w() + i]);
}

TEST_CASE("position parameter counting") {
    Rng rng(11);
    AcuLayer grid = make_acu_layer(2, 2, grid3x3_positions(), 1, 1, 1, rng);
    CHECK(grid.position_param_count() == 16);
    AcuLayer free_origin =
        make_acu_layer(2, 2, custom_positions({{0.5, 0.5}}, false), 1, 0, 1, rng);
    CHECK(free_origin.position_param_count() == 2);
    AcuLayer pinned =
        make_acu_layer(2, 2, custom_positions({{0.0, 0.0}}, true), 1, 0, 1, rng);
    CHECK(pinned.position_param_count() == 0);
}

TEST_CASE("custom position validation") {
    CHECK_THROWS_AS(custom_positions({}, true), std::invalid_argument);
    CHECK_THROWS_AS(custom_positions({{0.5, 0.0}}, true), std::invalid_argument);
    CHECK_THROWS_AS(custom_positions({{0.0, std::nan("")}}, false),
                    std::invalid_argument);
    CHECK_NOTHROW(custom_positions({{0.5, 0.0}}, false));
}

TEST_CASE("normalize_position_gradient scales pairs to unit norm") {
    std::vector<Point> g = {{3.0, 4.0}, {0.0, 0.0}, {-5e-13, 5e-13}};
    std::vector<Point> n = normalize_position_gradient(g, false);
    CHECK(n[0].alpha == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(n[0].beta == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(n[1].alpha == 0.0);
    CHECK(n[2].alpha == 0.0);  // below the dead-zone threshold
    CHECK(n[2].beta == 0.0);

    // a fixed origin never receives gradient
    std::vector<Point> nf = normalize_position_gradient({{3.0, 4.0}, {1.0, 0.0}}, true);
    CHECK(nf[0].alpha == 0.0);
    CHECK(nf[0].beta == 0.0);
    CHECK(nf[1].alpha == 1.0);
}

TEST_CASE("position update moves exactly lr * scale along the normalized step") {
    Rng rng(12);
    AcuLayer layer =
        make_acu_layer(1, 1, custom_positions({{0.0, 0.0}, {1.0, 1.0}}, true), 1, 1, 1,
                       rng);
    layer.position_lr_scale = 0.01;
    const double base_lr = 0.1;
    std::vector<std::vector<Point>> step = {{{0.0, 0.0}, {0.6, -0.8}}};

    apply_position_update(layer, step, base_lr, true);
    const double s = base_lr * layer.position_lr_scale;
    CHECK(layer.positions[0].points[1].alpha == 1.0 - s * 0.6);
    CHECK(layer.positions[0].points[1].beta == 1.0 + s * 0.8);
    CHECK(layer.positions[0].points[0].alpha == 0.0);
    // displacement magnitude is exactly the step size for a unit direction
    double da = layer.positions[0].points[1].alpha - 1.0;
    double db = layer.positions[0].points[1].beta - 1.0;
    CHECK(std::sqrt(da * da + db * db) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("updates are gated until warm-up completes") {
    Rng rng(13);
    AcuLayer layer = make_acu_layer(1, 1, grid3x3_positions(), 1, 1, 1, rng);
    std::vector<std::vector<Point>> step(1, std::vector<Point>(9, {1.0, 0.0}));
    std::vector<Point> before = layer.positions[0].points;
    apply_position_update(layer, step, 0.1, false);
    for (int k = 0; k < 9; ++k) {
        CHECK(layer.positions[0].points[k].alpha == before[k].alpha);
        CHECK(layer.positions[0].points[k].beta == before[k].beta);
    }
}

TEST_CASE("positions clamp to the configured radius") {
    Rng rng(14);
    AcuLayer layer =
        make_acu_layer(1, 1, custom_positions({{0.0, 0.0}, {0.999, -0.999}}, true), 1,
                       1, 1, rng);
    layer.position_lr_scale = 1.0;
    layer.clamp_radius = 1.0;
    std::vector<std::vector<Point>> step = {{{0.0, 0.0}, {-1.0, 1.0}}};
    apply_position_update(layer, step, 1.0, true);  // pushes to (1.999, -1.999)
    CHECK(layer.positions[0].points[1].alpha == 1.0);
    CHECK(layer.positions[0].points[1].beta == -1.0);
}

TEST_CASE("backward pins the fixed origin gradient at zero") {
    Rng rng(15);
    Tensor x = filled(1, 2, 5, 5, rng);
    AcuLayer layer = make_acu_layer(2, 2, grid3x3_positions(), 1, 1, 1, rng);
    AcuCache cache;
    Tensor y = acu_forward(x, layer, &cache);
    Tensor dy = filled(y.n(), y.c(), y.h(), y.w(), rng);
    AcuGradients g = acu_backward(dy, cache, layer);
    CHECK(g.d_positions[0][0].alpha == 0.0);
    CHECK(g.d_positions[0][0].beta == 0.0);
    // off-origin taps see the one-sided lattice derivative, generally nonzero
    bool any = false;
    for (int k = 1; k < 9; ++k)
        any = any || g.d_positions[0][k].alpha != 0.0 || g.d_positions[0][k].beta != 0.0;
    CHECK(any);
}

TEST_CASE("forward rejects mismatched channel count") {
    Rng rng(16);
    AcuLayer layer = make_acu_layer(3, 2, grid3x3_positions(), 1, 1, 1, rng);
    CHECK_THROWS_AS(acu_forward(Tensor(1, 2, 5, 5), layer), std::invalid_argument);
}
