#include "actconv/interp.hpp"

#include <cmath>
#include <stdexcept>

namespace actconv {

FracParts fractional_parts(double alpha, double beta) {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) {
        throw std::invalid_argument("fractional_parts: non-finite displacement");
    }
    FracParts fp;
    const double fa = std::floor(alpha);
    const double fb = std::floor(beta);
    fp.floor_alpha = static_cast<std::int64_t>(fa);
    fp.floor_beta = static_cast<std::int64_t>(fb);
    fp.d_alpha = alpha - fa;
    fp.d_beta = beta - fb;
    return fp;
}

CornerSample gather_corners(const Tensor& x, std::int64_t n, std::int64_t c,
                            std::int64_t base_h, std::int64_t base_w,
                            double alpha, double beta) {
    const FracParts fp = fractional_parts(alpha, beta);
    const std::int64_t h1 = base_h + fp.floor_alpha;
    const std::int64_t h2 = h1 + 1;
    const std::int64_t w1 = base_w + fp.floor_beta;
    const std::int64_t w2 = w1 + 1;

    const std::int64_t H = x.h(), W = x.w();
    auto read = [&](std::int64_t h, std::int64_t w) -> double {
        if (h < 0 || h >= H || w < 0 || w >= W) return 0.0;
        return x(n, c, h, w);
    };

    CornerSample s;
    s.q11 = read(h1, w1);
    s.q12 = read(h1, w2);
    s.q21 = read(h2, w1);
    s.q22 = read(h2, w2);
    s.d_alpha = fp.d_alpha;
    s.d_beta = fp.d_beta;
    return s;
}

}  // namespace actconv
