#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace actconv {

/// Result of a finite-difference sweep. `pass` reflects the tolerance the
/// sweep ran with; worst_coordinate names the block and flat index of the
/// largest relative error.
struct GradReport {
    double max_rel_err = 0.0;
    std::string worst_coordinate;
    double analytic = 0.0;
    double numeric = 0.0;
    double tol = 0.0;
    bool pass = true;
    std::int64_t checked = 0;

    /// Fixed-field one-liner for CI logs.
    std::string line() const;
};

/// Central difference (f(theta + h e_coord) - f(theta - h e_coord)) / 2h.
/// Throws std::runtime_error if f returns a non-finite value.
double central_diff(const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& theta, std::size_t coord,
                    double h);

enum class DiffMode {
    central,
    /// One-sided (f(x+h) - f(x)) / h; matches the floor-cell convention of
    /// interpolation derivatives at exact lattice points.
    forward_one_sided,
};

/// One named span of parameters (or inputs) to probe, paired with the
/// analytic gradient the sweep is judging.
struct ParamBlock {
    std::string name;
    double* values = nullptr;
    const double* analytic = nullptr;
    std::int64_t size = 0;
    DiffMode mode = DiffMode::central;
    /// Skip coordinates whose value lies within 10h of an integer
    /// (derivative kinks of interpolated sampling); meaningful for
    /// position coordinates probed with central differences.
    bool lattice_guard = false;
};

struct CheckOptions {
    double h = 1e-5;
    double tol = 1e-5;
    /// Coordinates where |analytic - numeric| is below this count as exact
    /// matches. Rescues parameters the loss provably ignores (e.g. a bias
    /// feeding straight into batch norm), where both sides are pure
    /// roundoff and the relative error is meaningless.
    double abs_tol = 0.0;
    /// 0 = probe every coordinate; otherwise sample this many per block.
    std::int64_t samples_per_block = 0;
    std::uint64_t seed = 1;
};

/// Probes coordinates of every block by perturbing them in place,
/// re-evaluating `loss`, and comparing the difference quotient against the
/// supplied analytic gradient. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). `loss` must be a pure function of the
/// block values; the sweep restores every value exactly. The loss closure
/// is the only thing evaluated -- no backward code runs here.
GradReport check_gradients(const std::function<double()>& loss,
                           const std::vector<ParamBlock>& blocks,
                           const CheckOptions& opt = {});

}  // namespace actconv
