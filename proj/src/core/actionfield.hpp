#pragma once

#include "core/plane.hpp"

namespace afw {

// One planar pull in image coordinates: press at pixel (x, y), drag distance
// d pixels along theta. x is the column, y the row; theta is measured from
// the +x axis with +y pointing down, in [-pi, pi).
struct PullAction {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double d = 0.0;
};

// The four raw model output planes at image resolution.
struct ActionMaps {
  RealPlane score;
  RealPlane sin_theta;  // tanh output, (-1, 1)
  RealPlane cos_theta;  // tanh output, (-1, 1)
  RealPlane dist_raw;   // pre-sigmoid distance head output

  bool shapes_consistent() const {
    return score.same_shape(sin_theta) && score.same_shape(cos_theta) &&
           score.same_shape(dist_raw);
  }
};

// Maps the raw distance head output to pixels:
//   d = d_b * (d_scale * sigmoid(x) + d_offset)
// The implied range is [d_b*d_offset, d_b*(d_scale + d_offset)].
struct DistanceLaw {
  double d_b = 10.0;
  double d_scale = 2.75;
  double d_offset = 0.25;

  void validate() const;
  double min_px() const { return d_b * d_offset; }
  double max_px() const { return d_b * (d_scale + d_offset); }
  double min_scale() const { return d_offset; }
  double max_scale() const { return d_scale + d_offset; }
};

// Per-pixel displacement in pixels.
struct DisplacementField {
  RealPlane dx;
  RealPlane dy;
};

double sigmoid(double x);

// Scale factor s = d_scale * sigmoid(raw) + d_offset.
double decode_distance_scale(double dist_raw_value, const DistanceLaw& law);

// Distance in pixels; strictly increasing in dist_raw_value.
double decode_distance(double dist_raw_value, const DistanceLaw& law);

// theta = atan2(sin, cos) in [-pi, pi). Throws DegenerateAngleError when the
// pair's magnitude is below 1e-6.
double decode_angle(double sin_value, double cos_value);

bool angle_pair_degenerate(double sin_value, double cos_value);

// dx = decoded_distance .* cos, dy = decoded_distance .* sin, pixel-wise.
// The (sin, cos) pair is used as-is, without unit normalization.
DisplacementField build_field(const ActionMaps& maps, const DistanceLaw& law);

// Argmax of the score plane restricted to garment_mask; ties broken by the
// smallest row-major index; pixels with a degenerate (sin, cos) pair are
// skipped. Throws NoActionError when no usable pixel exists.
PullAction select_action(const ActionMaps& maps, const MaskPlane& garment_mask,
                         const DistanceLaw& law);

}  // namespace afw
