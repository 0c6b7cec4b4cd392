#pragma once

#include "core/actionfield.hpp"
#include "core/plane.hpp"

namespace afw {

// Per-sample supervision. gt_d is in scale-factor units (pixels / d_b) so the
// distance head's sigmoid range matches label magnitudes.
struct SupervisionBundle {
  MaskPlane m_action;      // exactly one labeled pixel
  MaskPlane m_eaction;     // enlarged action mask, subset of the garment mask
  MaskPlane m_background;  // 1 - I_current
  double gt_s = 0.0;
  double gt_b = -1.0;
  double gt_sin = 0.0;
  double gt_cos = 1.0;
  double gt_d = 0.0;
  RealPlane current_mask;  // I_current, binary values
  RealPlane target_mask;   // I_target; empty when the task has no target
};

struct LossWeights {
  double lambda_b = 0.001;
  double lambda_p = 1.0;
  double lambda_a = 0.1;
  double lambda_d = 0.1;
  double lambda_s = 0.0;  // 25.0 for alignment

  void validate() const;
};

double smooth_l1(double e);
double smooth_l1_grad(double e);

// Binary dilation of the single-pixel action mask by the disk i^2+j^2 <= r^2,
// intersected with the garment mask. Throws ContractError if the action pixel
// lies outside the garment mask.
MaskPlane enlarge_action_mask(const MaskPlane& m_action, const MaskPlane& garment_mask, int r);

// L_a + lambda_b * L_b; masked means of SmoothL1 residuals against gt_s on
// the enlarged action mask and gt_b on the background.
double score_loss(const RealPlane& score_plane, const SupervisionBundle& bundle, double lambda_b);

// L_sin + L_cos + lambda_p * unit-circle penalty, masked means over M_EAction.
double angle_loss(const RealPlane& sin_plane, const RealPlane& cos_plane,
                  const SupervisionBundle& bundle, double lambda_p);

// Masked mean SmoothL1 between the decoded scale-factor plane and gt_d.
double distance_loss(const RealPlane& dist_plane_scale_units, const SupervisionBundle& bundle);

struct LossBreakdown {
  double score = 0.0;
  double angle = 0.0;
  double distance = 0.0;
  double shape = 0.0;
  double total = 0.0;
};

// L_total = L_score + la*L_angle + ld*L_distance + ls*L_shape. The shape term
// forward-warps I_current under the field decoded from the maps; it is not
// evaluated at all when lambda_s is zero.
LossBreakdown total_loss(const ActionMaps& maps, const SupervisionBundle& bundle,
                         const LossWeights& weights, const DistanceLaw& law);

// Gradient of the total loss with respect to the four raw planes (score,
// sin, cos, dist_raw). Mirrors total_loss exactly; optionally reports the
// same breakdown so callers need one pass only.
struct MapGradients {
  RealPlane score;
  RealPlane sin_theta;
  RealPlane cos_theta;
  RealPlane dist_raw;
};

MapGradients total_loss_gradients(const ActionMaps& maps, const SupervisionBundle& bundle,
                                  const LossWeights& weights, const DistanceLaw& law,
                                  LossBreakdown* breakdown_out = nullptr);

}  // namespace afw
