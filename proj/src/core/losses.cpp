#include "core/losses.hpp"

#include <cmath>
#include <string>

#include "core/warp.hpp"

namespace afw {

void LossWeights::validate() const {
  if (lambda_b < 0.0 || lambda_p < 0.0 || lambda_a < 0.0 || lambda_d < 0.0 || lambda_s < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

double smooth_l1(double e) {
  double a = std::fabs(e);
  return a < 1.0 ? 0.5 * e * e : a - 0.5;
}

double smooth_l1_grad(double e) {
  if (e > 1.0) return 1.0;
  if (e < -1.0) return -1.0;
  return e;
}

MaskPlane enlarge_action_mask(const MaskPlane& m_action, const MaskPlane& garment_mask, int r) {
  require_same_shape(m_action, garment_mask);
  if (r < 0) throw ConfigError("enlargement radius must be >= 0");
  int ay = -1, ax = -1;
  for (int y = 0; y < m_action.rows; ++y) {
    for (int x = 0; x < m_action.cols; ++x) {
      if (m_action.at(y, x)) {
        if (ay >= 0) throw ContractError("action mask has more than one set pixel");
        ay = y;
        ax = x;
      }
    }
  }
  if (ay < 0) throw ContractError("action mask has no set pixel");
  if (!garment_mask.at(ay, ax)) {
    throw ContractError("action pixel (" + std::to_string(ax) + "," + std::to_string(ay) +
                        ") lies outside the garment mask");
  }
  MaskPlane out(m_action.rows, m_action.cols, 0);
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) {
      if (i * i + j * j > r * r) continue;
      int y = ay + j, x = ax + i;
      if (!out.in_bounds(y, x)) continue;
      if (garment_mask.at(y, x)) out.at(y, x) = 1;
    }
  }
  return out;
}

namespace {

// Masked mean of SmoothL1(plane - gt). Empty masks contribute zero.
double masked_smooth_l1_mean(const RealPlane& plane, const MaskPlane& mask, double gt) {
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < plane.v.size(); ++i) {
    if (!mask.v[i]) continue;
    sum += smooth_l1(plane.v[i] - gt);
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

int mask_count(const MaskPlane& mask) {
  int count = 0;
  for (uint8_t m : mask.v) count += m ? 1 : 0;
  return count;
}

}  // namespace

double score_loss(const RealPlane& score_plane, const SupervisionBundle& bundle, double lambda_b) {
  require_same_shape(score_plane, bundle.m_eaction);
  require_same_shape(score_plane, bundle.m_background);
  double l_a = masked_smooth_l1_mean(score_plane, bundle.m_eaction, bundle.gt_s);
  double l_b = masked_smooth_l1_mean(score_plane, bundle.m_background, bundle.gt_b);
  return l_a + lambda_b * l_b;
}

double angle_loss(const RealPlane& sin_plane, const RealPlane& cos_plane,
                  const SupervisionBundle& bundle, double lambda_p) {
  require_same_shape(sin_plane, cos_plane);
  require_same_shape(sin_plane, bundle.m_eaction);
  double l_sin = masked_smooth_l1_mean(sin_plane, bundle.m_eaction, bundle.gt_sin);
  double l_cos = masked_smooth_l1_mean(cos_plane, bundle.m_eaction, bundle.gt_cos);
  double pen_sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < sin_plane.v.size(); ++i) {
    if (!bundle.m_eaction.v[i]) continue;
    double u = sin_plane.v[i] * sin_plane.v[i] + cos_plane.v[i] * cos_plane.v[i] - 1.0;
    pen_sum += u * u;
    ++count;
  }
  double pen = count > 0 ? pen_sum / count : 0.0;
  return l_sin + l_cos + lambda_p * pen;
}

double distance_loss(const RealPlane& dist_plane_scale_units, const SupervisionBundle& bundle) {
  require_same_shape(dist_plane_scale_units, bundle.m_eaction);
  return masked_smooth_l1_mean(dist_plane_scale_units, bundle.m_eaction, bundle.gt_d);
}

namespace {

RealPlane decode_scale_plane(const RealPlane& dist_raw, const DistanceLaw& law) {
  RealPlane s(dist_raw.rows, dist_raw.cols, 0.0);
  for (size_t i = 0; i < dist_raw.v.size(); ++i) {
    s.v[i] = law.d_scale * sigmoid(dist_raw.v[i]) + law.d_offset;
  }
  return s;
}

double shape_term(const ActionMaps& maps, const SupervisionBundle& bundle, const DistanceLaw& law,
                  WarpResult* warp_out, DisplacementField* field_out) {
  if (bundle.target_mask.v.empty()) {
    throw ContractError("shape loss requested but the sample has no target mask");
  }
  require_same_shape(bundle.current_mask, bundle.target_mask);
  DisplacementField field = build_field(maps, law);
  WarpResult warped = forward_warp(bundle.current_mask, field);
  double l = shape_discrepancy(warped.distorted, bundle.target_mask);
  if (warp_out) *warp_out = std::move(warped);
  if (field_out) *field_out = std::move(field);
  return l;
}

}  // namespace

LossBreakdown total_loss(const ActionMaps& maps, const SupervisionBundle& bundle,
                         const LossWeights& weights, const DistanceLaw& law) {
  if (!maps.shapes_consistent()) throw ContractError("action map planes disagree in shape");
  weights.validate();
  law.validate();
  LossBreakdown out;
  out.score = score_loss(maps.score, bundle, weights.lambda_b);
  out.angle = angle_loss(maps.sin_theta, maps.cos_theta, bundle, weights.lambda_p);
  out.distance = distance_loss(decode_scale_plane(maps.dist_raw, law), bundle);
  out.shape = weights.lambda_s != 0.0 ? shape_term(maps, bundle, law, nullptr, nullptr) : 0.0;
  out.total = out.score + weights.lambda_a * out.angle + weights.lambda_d * out.distance +
              weights.lambda_s * out.shape;
  return out;
}

MapGradients total_loss_gradients(const ActionMaps& maps, const SupervisionBundle& bundle,
                                  const LossWeights& weights, const DistanceLaw& law,
                                  LossBreakdown* breakdown_out) {
  if (!maps.shapes_consistent()) throw ContractError("action map planes disagree in shape");
  weights.validate();
  law.validate();
  int rows = maps.score.rows, cols = maps.score.cols;
  MapGradients g{RealPlane(rows, cols, 0.0), RealPlane(rows, cols, 0.0),
                 RealPlane(rows, cols, 0.0), RealPlane(rows, cols, 0.0)};
  LossBreakdown bd;

  int count_e = mask_count(bundle.m_eaction);
  int count_b = mask_count(bundle.m_background);

  // Score term: masked means over the enlarged action mask and the background.
  {
    double sum_a = 0.0, sum_b = 0.0;
    for (size_t i = 0; i < maps.score.v.size(); ++i) {
      if (bundle.m_eaction.v[i]) {
        double e = maps.score.v[i] - bundle.gt_s;
        sum_a += smooth_l1(e);
        g.score.v[i] += smooth_l1_grad(e) / count_e;
      }
      if (bundle.m_background.v[i]) {
        double e = maps.score.v[i] - bundle.gt_b;
        sum_b += smooth_l1(e);
        g.score.v[i] += weights.lambda_b * smooth_l1_grad(e) / count_b;
      }
    }
    bd.score = (count_e > 0 ? sum_a / count_e : 0.0) +
               weights.lambda_b * (count_b > 0 ? sum_b / count_b : 0.0);
  }

  // Angle term: SmoothL1 on each component plus the unit-circle penalty.
  if (count_e > 0) {
    double sum_sin = 0.0, sum_cos = 0.0, sum_pen = 0.0;
    for (size_t i = 0; i < maps.sin_theta.v.size(); ++i) {
      if (!bundle.m_eaction.v[i]) continue;
      double s = maps.sin_theta.v[i], c = maps.cos_theta.v[i];
      double es = s - bundle.gt_sin, ec = c - bundle.gt_cos;
      double u = s * s + c * c - 1.0;
      sum_sin += smooth_l1(es);
      sum_cos += smooth_l1(ec);
      sum_pen += u * u;
      double w = weights.lambda_a / count_e;
      g.sin_theta.v[i] += w * (smooth_l1_grad(es) + weights.lambda_p * 4.0 * u * s);
      g.cos_theta.v[i] += w * (smooth_l1_grad(ec) + weights.lambda_p * 4.0 * u * c);
    }
    bd.angle = (sum_sin + sum_cos + weights.lambda_p * sum_pen) / count_e;
  }

  // Distance term: chain through s = d_scale * sigmoid(raw) + d_offset.
  if (count_e > 0) {
    double sum_d = 0.0;
    for (size_t i = 0; i < maps.dist_raw.v.size(); ++i) {
      if (!bundle.m_eaction.v[i]) continue;
      double sig = sigmoid(maps.dist_raw.v[i]);
      double e = law.d_scale * sig + law.d_offset - bundle.gt_d;
      sum_d += smooth_l1(e);
      g.dist_raw.v[i] +=
          weights.lambda_d / count_e * smooth_l1_grad(e) * law.d_scale * sig * (1.0 - sig);
    }
    bd.distance = sum_d / count_e;
  }

  // Shape term: backprop through the forward warp into all three direction
  // and magnitude planes. Skipped entirely at zero weight.
  if (weights.lambda_s != 0.0) {
    WarpResult warped;
    DisplacementField field;
    bd.shape = shape_term(maps, bundle, law, &warped, &field);
    RealPlane upstream = shape_discrepancy_grad(warped.distorted, bundle.target_mask);
    FieldGradients fg = warp_gradients(bundle.current_mask, field, upstream);
    for (size_t i = 0; i < fg.d_dx.v.size(); ++i) {
      double gx = weights.lambda_s * fg.d_dx.v[i];
      double gy = weights.lambda_s * fg.d_dy.v[i];
      if (gx == 0.0 && gy == 0.0) continue;
      double sig = sigmoid(maps.dist_raw.v[i]);
      double d_px = law.d_b * (law.d_scale * sig + law.d_offset);
      g.cos_theta.v[i] += gx * d_px;
      g.sin_theta.v[i] += gy * d_px;
      g.dist_raw.v[i] += (gx * maps.cos_theta.v[i] + gy * maps.sin_theta.v[i]) * law.d_b *
                         law.d_scale * sig * (1.0 - sig);
    }
  }

  bd.total = bd.score + weights.lambda_a * bd.angle + weights.lambda_d * bd.distance +
             weights.lambda_s * bd.shape;
  if (breakdown_out) *breakdown_out = bd;
  return g;
}

}  // namespace afw
