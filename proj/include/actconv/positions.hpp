#pragma once

#include <vector>

namespace actconv {

/// One synapse displacement: alpha along height, beta along width, in
/// pixels relative to the base output position.
struct Point {
    double alpha = 0.0;
    double beta = 0.0;
};

/// The learnable position set of one ACU layer (or one group of a grouped
/// layer). When origin_fixed, points[0] stays pinned at (0,0) and takes
/// no gradient.
struct SynapsePositions {
    std::vector<Point> points;
    bool origin_fixed = true;

    int count() const { return static_cast<int>(points.size()); }
};

}  // namespace actconv
