#include "actconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "actconv/rng.hpp"

namespace actconv {

std::string GradReport::line() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "gradcheck %s max_rel_err=%.6e worst=%s analytic=%.9e "
                  "numeric=%.9e checked=%lld tol=%.1e",
                  pass ? "PASS" : "FAIL", max_rel_err,
                  worst_coordinate.empty() ? "-" : worst_coordinate.c_str(),
                  analytic, numeric, static_cast<long long>(checked), tol);
    return std::string(buf);
}

double central_diff(const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& theta, std::size_t coord,
                    double h) {
    if (coord >= theta.size()) {
        throw std::invalid_argument("central_diff: coord out of range");
    }
    if (h <= 0.0) throw std::invalid_argument("central_diff: h must be > 0");
    std::vector<double> t = theta;
    t[coord] = theta[coord] + h;
    const double fp = f(t);
    t[coord] = theta[coord] - h;
    const double fm = f(t);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("central_diff: non-finite function value");
    }
    return (fp - fm) / (2.0 * h);
}

namespace {

double rel_err(double a, double n) {
    return std::abs(a - n) /
           std::max({std::abs(a), std::abs(n), 1e-8});
}

bool near_lattice(double v, double margin) {
    const double frac = v - std::floor(v);
    return frac < margin || 1.0 - frac < margin;
}

}  // namespace

GradReport check_gradients(const std::function<double()>& loss,
                           const std::vector<ParamBlock>& blocks,
                           const CheckOptions& opt) {
    if (opt.h <= 0.0) {
        throw std::invalid_argument("check_gradients: h must be > 0");
    }
    GradReport rep;
    rep.tol = opt.tol;
    Rng rng(opt.seed);

    for (const ParamBlock& blk : blocks) {
        if (blk.size == 0) continue;
        if (!blk.values || !blk.analytic) {
            throw std::invalid_argument("check_gradients: null block pointers");
        }

        std::vector<std::int64_t> coords;
        if (opt.samples_per_block <= 0 || opt.samples_per_block >= blk.size) {
            coords.resize(static_cast<std::size_t>(blk.size));
            for (std::int64_t i = 0; i < blk.size; ++i) {
                coords[static_cast<std::size_t>(i)] = i;
            }
        } else {
            for (std::int64_t i = 0; i < opt.samples_per_block; ++i) {
                coords.push_back(rng.uniform_int(blk.size));
            }
        }

        for (std::int64_t idx : coords) {
            double* slot = blk.values + idx;
            const double saved = *slot;
            if (blk.lattice_guard && blk.mode == DiffMode::central &&
                near_lattice(saved, 10.0 * opt.h)) {
                continue;
            }

            double numeric;
            if (blk.mode == DiffMode::central) {
                *slot = saved + opt.h;
                const double fp = loss();
                *slot = saved - opt.h;
                const double fm = loss();
                numeric = (fp - fm) / (2.0 * opt.h);
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    *slot = saved;
                    throw std::runtime_error(
                        "check_gradients: non-finite loss at " + blk.name);
                }
            } else {
                const double f0 = loss();
                *slot = saved + opt.h;
                const double fp = loss();
                numeric = (fp - f0) / opt.h;
                if (!std::isfinite(fp) || !std::isfinite(f0)) {
                    *slot = saved;
                    throw std::runtime_error(
                        "check_gradients: non-finite loss at " + blk.name);
                }
            }
            *slot = saved;

            const double analytic = blk.analytic[idx];
            const double e = std::abs(analytic - numeric) <= opt.abs_tol
                                 ? 0.0
                                 : rel_err(analytic, numeric);
            ++rep.checked;
            if (e > rep.max_rel_err) {
                rep.max_rel_err = e;
                rep.worst_coordinate = blk.name + "[" + std::to_string(idx) + "]";
                rep.analytic = analytic;
                rep.numeric = numeric;
            }
        }
    }

    rep.pass = rep.max_rel_err < opt.tol;
    return rep;
}

}  // namespace actconv
