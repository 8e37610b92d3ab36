#pragma once

#include <cstdint>

#include "actconv/gradcheck.hpp"

namespace actconv {

/// Randomized small-instance sweeps pairing each analytic backward with
/// the finite-difference engine. Every instance is fully determined by
/// its seed. A scalar head sum(r * y) with fixed random r keeps the loss
/// linear in every parameter, so central differences are exact up to
/// rounding.

/// bilerp position partials inside one cell vs central differences.
GradReport check_interp_instance(std::uint64_t seed);

/// conv2d weights/bias/input gradients.
GradReport check_conv_instance(std::uint64_t seed);

/// ACU weights/bias/input/position gradients. lattice_mode puts every
/// synapse on integer positions and probes positions one-sided (the
/// floor-cell convention); otherwise synapses are jittered off-lattice
/// and probed with central differences.
GradReport check_acu_instance(std::uint64_t seed, bool lattice_mode);

/// Whole plain network at width 0.25 on a 2-sample batch, sampling one
/// coordinate per parameter block (plus inputs and jittered ACU
/// positions) against the real softmax loss.
GradReport check_network_instance(std::uint64_t seed);

}  // namespace actconv
