#pragma once

#include <cstdint>

#include "core/actionfield.hpp"
#include "core/plane.hpp"

namespace afw {

struct WarpResult {
  RealPlane distorted;
  // Fraction of input mass whose splat contributions landed inside the grid.
  double in_bounds_fraction = 1.0;
};

// Scatters each source pixel's value to the four integer neighbors of
// (x + dx, y + dy) with bilinear weights. Contributions outside the grid are
// dropped. Accumulation order is the fixed row-major scan, so results are
// bit-stable.
WarpResult forward_warp(const RealPlane& current_mask, const DisplacementField& field);

struct FieldGradients {
  RealPlane d_dx;
  RealPlane d_dy;
};

// Analytic d(loss)/d(dx), d(loss)/d(dy) given upstream = d(loss)/d(distorted).
// The bilinear weights are piecewise linear in the target coordinate; at
// integer targets the floor-based branch is used.
FieldGradients warp_gradients(const RealPlane& current_mask, const DisplacementField& field,
                              const RealPlane& upstream_grad);

// Mean over all pixels of (target - distorted)^2.
double shape_discrepancy(const RealPlane& distorted, const RealPlane& target_mask);

// d(shape_discrepancy)/d(distorted).
RealPlane shape_discrepancy_grad(const RealPlane& distorted, const RealPlane& target_mask);

// Number of forward_warp calls in this process. Lets training tests confirm
// the shape-loss path stays cold when its weight is zero.
uint64_t forward_warp_invocations();

}  // namespace afw
