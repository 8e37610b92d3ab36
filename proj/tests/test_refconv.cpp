#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <actconv/refconv.hpp>
#include <actconv/rng.hpp>

#include <stdexcept>

using namespace actconv;

namespace {

Tensor filled(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
              Rng& rng) {
    Tensor t(n, c, h, w);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.data()[i] = rng.normal(0.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("1x1 convolution is a channel mix") {
    Tensor x(1, 2, 2, 2);
    // channel 0 = [1 2; 3 4], channel 1 = [10 20; 30 40]
    for (std::int64_t i = 0; i < 4; ++i) {
        x.data()[i] = static_cast<double>(i + 1);
        x.data()[4 + i] = 10.0 * (i + 1);
    }
    ConvParams p;
    p.weights = Tensor(1, 2, 1, 1);
    p.weights(0, 0, 0, 0) = 2.0;
    p.weights(0, 1, 0, 0) = 0.5;
    p.bias = {1.0};
    Tensor y = conv2d(x, p);
    CHECK(y.h() == 2);
    CHECK(y.w() == 2);
    CHECK(y(0, 0, 0, 0) == doctest::Approx(1.0 + 2.0 * 1 + 0.5 * 10).epsilon(1e-15));
    CHECK(y(0, 0, 1, 1) == doctest::Approx(1.0 + 2.0 * 4 + 0.5 * 40).epsilon(1e-15));
}

TEST_CASE("3x3 box filter with pad 1 on a delta image") {
    Tensor x(1, 1, 3, 3);
    x(0, 0, 1, 1) = 1.0;
    ConvParams p;
    p.weights = Tensor(1, 1, 3, 3, 1.0);
    p.bias = {0.0};
    p.pad = 1;
    Tensor y = conv2d(x, p);
    // the delta spreads to every output position that covers it
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 3; ++j)
            CHECK(y(0, 0, i, j) == 1.0);
}

TEST_CASE("stride 2 output geometry and values") {
    Tensor x(1, 1, 5, 5);
    for (std::int64_t i = 0; i < 25; ++i) x.data()[i] = static_cast<double>(i);
    ConvParams p;
    p.weights = Tensor(1, 1, 1, 1);
    p.weights(0, 0, 0, 0) = 1.0;
    p.bias = {0.0};
    p.stride = 2;
    Tensor y = conv2d(x, p);
    CHECK(y.h() == 3);
    CHECK(y.w() == 3);
    CHECK(y(0, 0, 1, 1) == x(0, 0, 2, 2));
    CHECK(y(0, 0, 2, 0) == x(0, 0, 4, 0));
}

TEST_CASE("dilation 2 reads every other pixel") {
    Tensor x(1, 1, 5, 5);
    x(0, 0, 0, 0) = 1.0;
    x(0, 0, 0, 2) = 10.0;
    x(0, 0, 2, 0) = 100.0;
    x(0, 0, 4, 4) = 1000.0;
    ConvParams p;
    p.weights = Tensor(1, 1, 3, 3, 1.0);
    p.bias = {0.0};
    p.dilation = 2;
    Tensor y = conv2d(x, p);
    CHECK(y.h() == 1);
    CHECK(y.w() == 1);
    CHECK(y(0, 0, 0, 0) == 1.0 + 10.0 + 100.0 + 1000.0);
}

TEST_CASE("even kernels are rejected") {
    ConvParams p;
    p.weights = Tensor(1, 1, 2, 2);
    p.bias = {0.0};
    CHECK_THROWS_AS(conv2d(Tensor(1, 1, 4, 4), p), std::invalid_argument);
}

TEST_CASE("convolution is linear in the input") {
    Rng rng(11);
    Tensor a = filled(2, 3, 6, 6, rng);
    Tensor b = filled(2, 3, 6, 6, rng);
    ConvParams p;
    p.weights = filled(4, 3, 3, 3, rng);
    p.bias.assign(4, 0.0);
    p.pad = 1;

    Tensor sum(2, 3, 6, 6);
    for (std::int64_t i = 0; i < sum.size(); ++i)
        sum.data()[i] = 2.0 * a.data()[i] - 3.0 * b.data()[i];

    Tensor ya = conv2d(a, p);
    Tensor yb = conv2d(b, p);
    Tensor ys = conv2d(sum, p);
    for (std::int64_t i = 0; i < ys.size(); ++i)
        CHECK(ys.data()[i] ==
              doctest::Approx(2.0 * ya.data()[i] - 3.0 * yb.data()[i]).epsilon(1e-10));
}

TEST_CASE("backward matches finite differences on a tiny instance") {
    Rng rng(5);
    Tensor x = filled(1, 2, 4, 4, rng);
    ConvParams p;
    p.weights = filled(2, 2, 3, 3, rng);
    p.bias = {0.1, -0.2};
    p.pad = 1;
    Tensor dy = filled(1, 2, 4, 4, rng);

    ConvGradients g = conv2d_backward(x, p, dy);
    REQUIRE(g.d_weights.same_shape(p.weights));
    REQUIRE(g.d_input.same_shape(x));

    auto loss = [&] {
        Tensor y = conv2d(x, p);
        double s = 0.0;
        for (std::int64_t i = 0; i < y.size(); ++i) s += y.data()[i] * dy.data()[i];
        return s;
    };
    const double h = 1e-6;
    for (std::int64_t i = 0; i < p.weights.size(); i += 7) {
        double save = p.weights.data()[i];
        p.weights.data()[i] = save + h;
        double up = loss();
        p.weights.data()[i] = save - h;
        double dn = loss();
        p.weights.data()[i] = save;
        CHECK(g.d_weights.data()[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
    }
    for (std::int64_t i = 0; i < x.size(); i += 5) {
        double save = x.data()[i];
        x.data()[i] = save + h;
        double up = loss();
        x.data()[i] = save - h;
        double dn = loss();
        x.data()[i] = save;
        CHECK(g.d_input.data()[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
    }
    double bias_sum = 0.0;
    for (std::int64_t i = 0; i < dy.size() / 2; ++i) bias_sum += dy.data()[i];
    CHECK(g.d_bias[0] == doctest::Approx(bias_sum).epsilon(1e-10));
}

TEST_CASE("lattice_positions puts the origin first") {
    SynapsePositions p = lattice_positions(3, 3, 1);
    REQUIRE(p.count() == 9);
    CHECK(p.origin_fixed);
    CHECK(p.points[0].alpha == 0.0);
    CHECK(p.points[0].beta == 0.0);
    // remaining taps keep row-major grid order
    CHECK(p.points[1].alpha == -1.0);
    CHECK(p.points[1].beta == -1.0);
    CHECK(p.points[8].alpha == 1.0);
    CHECK(p.points[8].beta == 1.0);

    SynapsePositions d = lattice_positions(3, 3, 2);
    CHECK(d.points[1].alpha == -2.0);
    CHECK(d.points[8].beta == 2.0);

    CHECK_THROWS_AS(lattice_positions(2, 3, 1), std::invalid_argument);
}
