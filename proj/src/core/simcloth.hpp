#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/actionfield.hpp"
#include "core/common.hpp"
#include "core/plane.hpp"

namespace afw {

enum class ShapeKind { Rectangle, Tshirt, Trousers };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

// World frame shares the image convention: x right, y DOWN, origin at the
// window center. One scale for both axes, width-derived, so pixels are square.
struct RenderConfig {
  int height = 128;
  int width = 128;
  double world_window = 0.4;  // meters spanned by the image width
  std::array<uint8_t, 3> garment_color{46, 98, 166};
  std::array<uint8_t, 3> background_color{204, 204, 204};

  void validate() const;  // H, W >= 32; world_window > 0
  double px_per_m() const { return width / world_window; }
  Vec2 world_to_px(const Vec2& w) const;
  Vec2 px_to_world(const Vec2& p) const;
};

struct PhysicsParams {
  double mass = 1.0;
  double k_tension = 2500.0;  // stretched springs pull hard (cloth barely extends)
  double k_compress = 120.0;  // compressed springs push weakly (folds persist)
  double f_static = 4.0;      // net spring force below this cannot start motion
  double f_kinetic = 2.0;     // constant decelerating force while sliding
  double dt = 0.004;
  double damping = 0.92;
  int drive_substeps = 12;
  int drive_inner_iters = 4;
  int relax_iters = 40;
  double v_stop = 1e-4;

  void validate() const;
};

// Particle lattice on a frictional table plane. Only active lattice cells
// carry particles; springs derive from the lattice and are never stored.
struct FabricState {
  int rows = 0;
  int cols = 0;
  double rest_spacing = 0.0;
  std::vector<uint8_t> active;  // rows*cols, row-major
  std::vector<Vec2> pos;        // rows*cols world positions; inactive entries unused
  uint64_t rng_seed = 0;

  int idx(int r, int c) const { return r * cols + c; }
  bool is_active(int r, int c) const {
    return r >= 0 && r < rows && c >= 0 && c < cols && active[idx(r, c)] != 0;
  }
  int active_count() const;
  Vec2 centroid() const;  // over active particles
  bool all_finite() const;
};

enum class CrumpleLevel { Easy, Hard };

CrumpleLevel crumple_level_from_string(const std::string& name);
const char* to_string(CrumpleLevel level);

struct MetricPair {
  double coverage = 0.0;
  double iou = 0.0;
};

struct PullOutcome {
  FabricState state;
  bool missed = false;
  double energy_drag_end = 0.0;
  double energy_settled = 0.0;
};

struct RenderResult {
  ImageRGB rgb;
  MaskPlane mask;
};

// Flattened garment centered in the world window. Grid dims each >= 8.
FabricState make_flat_state(ShapeKind kind, int rows, int cols, double rest_spacing,
                            uint64_t seed);

// Random inward drags (easy: 2, hard: 2 then a fold then 3 more) that bunch
// the fabric; deterministic per seed, coverage strictly below 1 afterward.
FabricState crumple(const FabricState& state, CrumpleLevel level, uint64_t seed,
                    const PhysicsParams& phys = {});

// Kinematic drag of the grabbed patch along theta for d pixels, then damped
// relaxation with table friction. A contact point farther than grab_radius
// from every particle returns missed=true with the state untouched.
PullOutcome apply_pull(const FabricState& state, const PullAction& action,
                       const RenderConfig& cfg, const PhysicsParams& phys = {});

RenderResult render(const FabricState& state, const RenderConfig& cfg);

// coverage = |current| / |flat_reference|; iou vs target (0 when target is
// null or both masks empty). Zero reference area is a configuration error.
MetricPair metrics(const MaskPlane& current_mask, const MaskPlane& flat_reference_mask,
                   const MaskPlane* target_mask = nullptr);

// Reflects every active particle with (p - line_point) . line_normal > 0.
// Pure geometry, no settling; crumple and the fold tests build on it.
FabricState fold_across_line(const FabricState& state, const Vec2& line_point,
                             const Vec2& line_normal);

double spring_energy(const FabricState& state, const PhysicsParams& phys = {});

FabricState settle(const FabricState& state, int iters, const PhysicsParams& phys = {});

double grab_radius(const FabricState& state);

}  // namespace afw
