#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <actconv/gradcheck.hpp>
#include <actconv/gradsuite.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace actconv;

TEST_CASE("central_diff on a quadratic") {
    std::vector<double> theta = {2.0, -1.0};
    auto f = [](const std::vector<double>& t) { return t[0] * t[0] + 3.0 * t[1]; };
    CHECK(central_diff(f, theta, 0, 1e-6) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(central_diff(f, theta, 1, 1e-6) == doctest::Approx(3.0).epsilon(1e-8));
    // the input vector is left untouched
    CHECK(theta[0] == 2.0);
    CHECK_THROWS_AS(central_diff(f, theta, 5, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(central_diff(f, theta, 0, 0.0), std::invalid_argument);
}

TEST_CASE("check_gradients confirms a correct gradient") {
    std::vector<double> v = {0.3, -0.7, 1.1};
    std::vector<double> g(3);
    auto loss = [&] { return v[0] * v[0] + 2.0 * v[1] * v[1] + 0.5 * v[2]; };
    auto fill = [&] {
        g = {2.0 * v[0], 4.0 * v[1], 0.5};
    };
    fill();
    ParamBlock blk{"v", v.data(), g.data(), 3, DiffMode::central, false};
    GradReport rep = check_gradients(loss, {blk});
    CHECK(rep.pass);
    CHECK(rep.checked == 3);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("check_gradients flags a planted error") {
    std::vector<double> v = {0.5, 0.25};
    std::vector<double> g = {2.0 * v[0], 1.9};  // second entry should be 2.0*v[1]... plant 1.9
    auto loss = [&] { return v[0] * v[0] + v[1] * v[1]; };
    ParamBlock blk{"v", v.data(), g.data(), 2, DiffMode::central, false};
    GradReport rep = check_gradients(loss, {blk});
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_coordinate == "v[1]");
}

TEST_CASE("one-sided mode uses the forward difference") {
    // f = |x| at x=0: right derivative +1, central difference would give 0
    std::vector<double> v = {0.0};
    std::vector<double> g = {1.0};
    auto loss = [&] { return std::abs(v[0]); };
    ParamBlock fwd{"x", v.data(), g.data(), 1, DiffMode::forward_one_sided, false};
    GradReport rep = check_gradients(loss, {fwd});
    CHECK(rep.pass);

    ParamBlock ctr{"x", v.data(), g.data(), 1, DiffMode::central, false};
    GradReport rep2 = check_gradients(loss, {ctr});
    CHECK_FALSE(rep2.pass);
}

TEST_CASE("lattice guard skips coordinates too close to integers") {
    std::vector<double> v = {1.0 + 2e-5, 0.5};  // first is within 10h of the lattice
    std::vector<double> g = {123.0, 1.0};       // wrong on purpose; must be skipped
    auto loss = [&] { return v[1]; };
    CheckOptions opt;
    opt.h = 1e-5;
    ParamBlock blk{"p", v.data(), g.data(), 2, DiffMode::central, true};
    GradReport rep = check_gradients(loss, {blk}, opt);
    CHECK(rep.pass);
    CHECK(rep.checked == 1);
}

TEST_CASE("abs_tol rescues provably dead parameters") {
    std::vector<double> v = {0.7};
    std::vector<double> g = {1e-17};  // analytically zero up to roundoff
    auto f = [] { return 5.0; };      // loss ignores the parameter entirely
    CheckOptions opt;
    opt.tol = 1e-5;
    ParamBlock blk{"dead", v.data(), g.data(), 1, DiffMode::central, false};
    GradReport strict = check_gradients(f, {blk}, opt);
    CHECK(strict.pass);  // numeric is exactly 0 here, rel err 0

    // with numeric noise the rel err floor would trip; abs_tol forgives it
    std::vector<double> g2 = {2e-11};
    ParamBlock blk2{"dead", v.data(), g2.data(), 1, DiffMode::central, false};
    GradReport noisy = check_gradients(f, {blk2}, opt);
    CHECK_FALSE(noisy.pass);
    opt.abs_tol = 1e-9;
    GradReport saved = check_gradients(f, {blk2}, opt);
    CHECK(saved.pass);
}

TEST_CASE("sampling probes a bounded number of coordinates per block") {
    std::vector<double> v(100, 0.5);
    std::vector<double> g(100, 3.0);
    auto loss = [&] {
        double s = 0.0;
        for (double x : v) s += 3.0 * x;
        return s;
    };
    CheckOptions opt;
    opt.samples_per_block = 7;
    ParamBlock blk{"big", v.data(), g.data(), 100, DiffMode::central, false};
    GradReport rep = check_gradients(loss, {blk}, opt);
    CHECK(rep.pass);
    CHECK(rep.checked == 7);
}

TEST_CASE("non-finite loss is reported, not propagated as a bogus pass") {
    std::vector<double> v = {1.0};
    std::vector<double> g = {0.0};
    auto loss = [&] { return v[0] > 1.0 ? std::nan("") : 0.0; };
    ParamBlock blk{"x", v.data(), g.data(), 1, DiffMode::central, false};
    CHECK_THROWS_AS(check_gradients(loss, {blk}), std::runtime_error);
}

TEST_CASE("report line formats a stable summary") {
    GradReport rep;
    rep.pass = true;
    rep.max_rel_err = 1.25e-7;
    rep.worst_coordinate = "w[3]";
    rep.analytic = 0.5;
    rep.numeric = 0.5;
    rep.checked = 12;
    rep.tol = 1e-5;
    std::string line = rep.line();
    CHECK(line.find("PASS") != std::string::npos);
    CHECK(line.find("w[3]") != std::string::npos);
    CHECK(line.find("max_rel_err") != std::string::npos);
}

TEST_CASE("suite instances are deterministic in their seed") {
    GradReport a = check_acu_instance(17, false);
    GradReport b = check_acu_instance(17, false);
    CHECK(a.max_rel_err == b.max_rel_err);
    CHECK(a.checked == b.checked);
    CHECK(a.worst_coordinate == b.worst_coordinate);
}
