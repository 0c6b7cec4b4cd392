#include "core/warp.hpp"

#include <atomic>
#include <cmath>

namespace afw {

namespace {
std::atomic<uint64_t> g_warp_calls{0};
}

uint64_t forward_warp_invocations() { return g_warp_calls.load(); }

WarpResult forward_warp(const RealPlane& current_mask, const DisplacementField& field) {
  if (!current_mask.same_shape(field.dx) || !current_mask.same_shape(field.dy))
    throw ContractError("forward_warp: mask and field shapes differ");
  g_warp_calls.fetch_add(1);

  const int rows = current_mask.rows;
  const int cols = current_mask.cols;
  WarpResult out;
  out.distorted = RealPlane(rows, cols, 0.0);

  double total_mass = 0.0;
  double kept_mass = 0.0;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double value = current_mask.at(y, x);
      if (value == 0.0) continue;
      total_mass += value;

      const double xt = x + field.dx.at(y, x);
      const double yt = y + field.dy.at(y, x);
      const double x0 = std::floor(xt);
      const double y0 = std::floor(yt);
      const double fx = xt - x0;  // in [0, 1)
      const double fy = yt - y0;
      const int ix0 = static_cast<int>(x0);
      const int iy0 = static_cast<int>(y0);

      const double w00 = (1.0 - fx) * (1.0 - fy);
      const double w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy;
      const double w11 = fx * fy;

      const auto splat = [&](int yy, int xx, double w) {
        if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) return;
        out.distorted.at(yy, xx) += value * w;
        kept_mass += value * w;
      };
      splat(iy0, ix0, w00);
      splat(iy0, ix0 + 1, w10);
      splat(iy0 + 1, ix0, w01);
      splat(iy0 + 1, ix0 + 1, w11);
    }
  }
  out.in_bounds_fraction = total_mass > 0.0 ? kept_mass / total_mass : 1.0;
  return out;
}

FieldGradients warp_gradients(const RealPlane& current_mask, const DisplacementField& field,
                              const RealPlane& upstream_grad) {
  if (!current_mask.same_shape(field.dx) || !current_mask.same_shape(field.dy))
    throw ContractError("warp_gradients: mask and field shapes differ");
  if (!current_mask.same_shape(upstream_grad))
    throw ContractError("warp_gradients: upstream gradient shape differs");

  const int rows = current_mask.rows;
  const int cols = current_mask.cols;
  FieldGradients g;
  g.d_dx = RealPlane(rows, cols, 0.0);
  g.d_dy = RealPlane(rows, cols, 0.0);

  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double value = current_mask.at(y, x);
      if (value == 0.0) continue;

      const double xt = x + field.dx.at(y, x);
      const double yt = y + field.dy.at(y, x);
      const double x0 = std::floor(xt);
      const double y0 = std::floor(yt);
      const double fx = xt - x0;
      const double fy = yt - y0;
      const int ix0 = static_cast<int>(x0);
      const int iy0 = static_cast<int>(y0);

      const auto up = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) return 0.0;
        return upstream_grad.at(yy, xx);
      };
      const double u00 = up(iy0, ix0);
      const double u10 = up(iy0, ix0 + 1);
      const double u01 = up(iy0 + 1, ix0);
      const double u11 = up(iy0 + 1, ix0 + 1);

      // d(w)/d(xt) and d(w)/d(yt) for each of the four bilinear weights.
      const double d_dxt = -u00 * (1.0 - fy) + u10 * (1.0 - fy) - u01 * fy + u11 * fy;
      const double d_dyt = -u00 * (1.0 - fx) - u10 * fx + u01 * (1.0 - fx) + u11 * fx;

      g.d_dx.at(y, x) = value * d_dxt;
      g.d_dy.at(y, x) = value * d_dyt;
    }
  }
  return g;
}

double shape_discrepancy(const RealPlane& distorted, const RealPlane& target_mask) {
  if (!distorted.same_shape(target_mask))
    throw ContractError("shape_discrepancy: shapes differ");
  double acc = 0.0;
  for (size_t i = 0; i < distorted.size(); ++i) {
    const double e = target_mask.v[i] - distorted.v[i];
    acc += e * e;
  }
  return acc / static_cast<double>(distorted.size());
}

RealPlane shape_discrepancy_grad(const RealPlane& distorted, const RealPlane& target_mask) {
  if (!distorted.same_shape(target_mask))
    throw ContractError("shape_discrepancy_grad: shapes differ");
  RealPlane g(distorted.rows, distorted.cols);
  const double inv_n = 1.0 / static_cast<double>(distorted.size());
  for (size_t i = 0; i < distorted.size(); ++i)
    g.v[i] = 2.0 * (distorted.v[i] - target_mask.v[i]) * inv_n;
  return g;
}

}  // namespace afw
