#pragma once

#include <cstdint>

#include "actconv/tensor.hpp"

namespace actconv {

// Axis convention used throughout: alpha displaces along the height axis,
// beta along the width axis.

struct FracParts {
    double d_alpha = 0.0;  // alpha - floor(alpha), in [0,1)
    double d_beta = 0.0;
    std::int64_t floor_alpha = 0;  // mathematical floor (toward -inf)
    std::int64_t floor_beta = 0;
};

/// Splits a fractional displacement into integer floor and fractional part.
/// Throws on non-finite input.
FracParts fractional_parts(double alpha, double beta);

/// The four lattice neighbors of a fractional sample point plus its
/// fractional offsets. q11 is the floor corner; the first digit moves
/// along height, the second along width.
struct CornerSample {
    double q11 = 0.0, q12 = 0.0, q21 = 0.0, q22 = 0.0;
    double d_alpha = 0.0, d_beta = 0.0;
};

/// Reads the four corners surrounding (base_h + alpha, base_w + beta) in
/// channel (n, c) of x. Out-of-bounds lattice points read as 0 (zero
/// extension); base coordinates may be negative (padding already applied
/// by the caller).
CornerSample gather_corners(const Tensor& x, std::int64_t n, std::int64_t c,
                            std::int64_t base_h, std::int64_t base_w,
                            double alpha, double beta);

/// Bilinear interpolation of a corner sample:
/// q11(1-da)(1-db) + q21 da (1-db) + q12 (1-da) db + q22 da db.
inline double bilerp(const CornerSample& s) {
    const double da = s.d_alpha, db = s.d_beta;
    return s.q11 * (1.0 - da) * (1.0 - db) + s.q21 * da * (1.0 - db) +
           s.q12 * (1.0 - da) * db + s.q22 * da * db;
}

struct PositionPartials {
    double d_alpha = 0.0;
    double d_beta = 0.0;
};

/// Partial derivatives of bilerp with respect to the displacement, before
/// any weight multiplication or channel sum:
///   d/dalpha = (1-db)(q21-q11) + db(q22-q12)
///   d/dbeta  = (1-da)(q12-q11) + da(q22-q21)
/// At exact lattice points (d == 0) this is the one-sided derivative into
/// the floor cell.
inline PositionPartials bilerp_position_partials(const CornerSample& s) {
    const double da = s.d_alpha, db = s.d_beta;
    return {(1.0 - db) * (s.q21 - s.q11) + db * (s.q22 - s.q12),
            (1.0 - da) * (s.q12 - s.q11) + da * (s.q22 - s.q21)};
}

}  // namespace actconv
