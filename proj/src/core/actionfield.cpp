#include "core/actionfield.hpp"

#include <cmath>

namespace afw {

void DistanceLaw::validate() const {
  if (!(d_b > 0.0)) throw ConfigError("distance law: d_b must be positive");
  if (!(d_offset > 0.0)) throw ConfigError("distance law: d_offset must be positive");
  if (!(d_scale >= 0.0)) throw ConfigError("distance law: d_scale must be nonnegative");
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double decode_distance_scale(double dist_raw_value, const DistanceLaw& law) {
  return law.d_scale * sigmoid(dist_raw_value) + law.d_offset;
}

double decode_distance(double dist_raw_value, const DistanceLaw& law) {
  return law.d_b * decode_distance_scale(dist_raw_value, law);
}

bool angle_pair_degenerate(double sin_value, double cos_value) {
  return std::hypot(sin_value, cos_value) < 1e-6;
}

double decode_angle(double sin_value, double cos_value) {
  if (angle_pair_degenerate(sin_value, cos_value))
    throw DegenerateAngleError("(sin, cos) pair too small to define an angle");
  double theta = std::atan2(sin_value, cos_value);
  if (theta >= M_PI) theta = -M_PI;  // atan2 returns (-pi, pi]; fold +pi to -pi
  return theta;
}

DisplacementField build_field(const ActionMaps& maps, const DistanceLaw& law) {
  if (!maps.shapes_consistent()) throw ContractError("build_field: plane shapes differ");
  law.validate();
  DisplacementField f;
  f.dx = RealPlane(maps.score.rows, maps.score.cols);
  f.dy = RealPlane(maps.score.rows, maps.score.cols);
  for (size_t i = 0; i < maps.score.size(); ++i) {
    const double d = decode_distance(maps.dist_raw.v[i], law);
    f.dx.v[i] = d * maps.cos_theta.v[i];
    f.dy.v[i] = d * maps.sin_theta.v[i];
  }
  return f;
}

PullAction select_action(const ActionMaps& maps, const MaskPlane& garment_mask,
                         const DistanceLaw& law) {
  if (!maps.shapes_consistent()) throw ContractError("select_action: plane shapes differ");
  if (!garment_mask.same_shape(maps.score))
    throw ContractError("select_action: mask shape differs from maps");
  if (mask_area(garment_mask) == 0) throw NoActionError("select_action: empty garment mask");

  bool found = false;
  size_t best = 0;
  double best_score = 0.0;
  for (size_t i = 0; i < maps.score.size(); ++i) {
    if (!garment_mask.v[i]) continue;
    if (angle_pair_degenerate(maps.sin_theta.v[i], maps.cos_theta.v[i])) continue;
    if (!found || maps.score.v[i] > best_score) {
      found = true;
      best = i;
      best_score = maps.score.v[i];
    }
  }
  if (!found) throw NoActionError("select_action: all garment pixels degenerate");

  PullAction a;
  a.x = static_cast<double>(best % maps.score.cols);
  a.y = static_cast<double>(best / maps.score.cols);
  a.theta = decode_angle(maps.sin_theta.v[best], maps.cos_theta.v[best]);
  a.d = decode_distance(maps.dist_raw.v[best], law);
  return a;
}

}  // namespace afw
