#include "core/simcloth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "core/rng.hpp"

namespace afw {

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Tshirt: return "tshirt";
    case ShapeKind::Trousers: return "trousers";
  }
  return "rectangle";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "rectangle") return ShapeKind::Rectangle;
  if (name == "tshirt") return ShapeKind::Tshirt;
  if (name == "trousers") return ShapeKind::Trousers;
  throw ConfigError("unknown shape kind: " + name);
}

const char* to_string(CrumpleLevel level) {
  return level == CrumpleLevel::Easy ? "easy" : "hard";
}

CrumpleLevel crumple_level_from_string(const std::string& name) {
  if (name == "easy") return CrumpleLevel::Easy;
  if (name == "hard") return CrumpleLevel::Hard;
  throw ConfigError("unknown crumple level: " + name);
}

void RenderConfig::validate() const {
  if (height < 32 || width < 32) throw ConfigError("render size must be at least 32x32");
  if (!(world_window > 0.0)) throw ConfigError("world_window must be positive");
}

Vec2 RenderConfig::world_to_px(const Vec2& w) const {
  double s = px_per_m();
  return {width * 0.5 + w.x * s, height * 0.5 + w.y * s};
}

Vec2 RenderConfig::px_to_world(const Vec2& p) const {
  double s = px_per_m();
  return {(p.x - width * 0.5) / s, (p.y - height * 0.5) / s};
}

void PhysicsParams::validate() const {
  if (mass <= 0 || k_tension <= 0 || k_compress <= 0 || dt <= 0) {
    throw ConfigError("physics constants must be positive");
  }
  if (damping <= 0 || damping > 1) throw ConfigError("damping must lie in (0, 1]");
  if (drive_substeps < 1 || relax_iters < 0 || drive_inner_iters < 0) {
    throw ConfigError("iteration counts out of range");
  }
}

int FabricState::active_count() const {
  int n = 0;
  for (uint8_t a : active) n += a ? 1 : 0;
  return n;
}

Vec2 FabricState::centroid() const {
  Vec2 c{0, 0};
  int n = 0;
  for (size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) continue;
    c += pos[i];
    ++n;
  }
  if (n == 0) throw ContractError("centroid of a fabric with no active particles");
  return c / double(n);
}

bool FabricState::all_finite() const {
  for (size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) continue;
    if (!std::isfinite(pos[i].x) || !std::isfinite(pos[i].y)) return false;
  }
  return true;
}

double grab_radius(const FabricState& state) { return 1.5 * state.rest_spacing; }

namespace {

// Silhouette predicates on the lattice. Integer arithmetic keeps the cell
// counts exactly enumerable.
bool shape_cell(ShapeKind kind, int r, int c, int rows, int cols) {
  switch (kind) {
    case ShapeKind::Rectangle:
      return true;
    case ShapeKind::Tshirt: {
      // Sleeve band across the top, torso stem below.
      int sleeve_rows = std::max(2, 3 * rows / 10);
      int torso_c0 = cols / 4;
      int torso_c1 = cols - cols / 4;
      return r < sleeve_rows || (c >= torso_c0 && c < torso_c1);
    }
    case ShapeKind::Trousers: {
      // Waistband across the top, two legs with a gap between them.
      int waist_rows = std::max(2, rows / 4);
      int leg_w = std::max(2, 3 * cols / 8);
      return r < waist_rows || c < leg_w || c >= cols - leg_w;
    }
  }
  return false;
}

struct Spring {
  int a, b;
  double rest;
};

std::vector<Spring> build_springs(const FabricState& s) {
  std::vector<Spring> springs;
  springs.reserve(size_t(s.rows) * s.cols * 4);
  double a = s.rest_spacing;
  double diag = a * std::sqrt(2.0);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      if (!s.is_active(r, c)) continue;
      int i = s.idx(r, c);
      if (s.is_active(r, c + 1)) springs.push_back({i, s.idx(r, c + 1), a});
      if (s.is_active(r + 1, c)) springs.push_back({i, s.idx(r + 1, c), a});
      if (s.is_active(r + 1, c + 1)) springs.push_back({i, s.idx(r + 1, c + 1), diag});
      if (c > 0 && s.is_active(r + 1, c - 1)) springs.push_back({i, s.idx(r + 1, c - 1), diag});
    }
  }
  return springs;
}

void accumulate_forces(const FabricState& s, const std::vector<Spring>& springs,
                       const PhysicsParams& phys, std::vector<Vec2>& force) {
  std::fill(force.begin(), force.end(), Vec2{0, 0});
  for (const Spring& sp : springs) {
    Vec2 d = s.pos[sp.b] - s.pos[sp.a];
    double len = d.norm();
    if (len < 1e-9) continue;  // coincident fold overlay, no defined direction
    double ext = len - sp.rest;
    double k = ext > 0 ? phys.k_tension : phys.k_compress;
    Vec2 f = d * (k * ext / len);  // pulls a toward b when stretched
    force[sp.a] += f;
    force[sp.b] -= f;
  }
}

// One damped symplectic-Euler step with Coulomb-style table friction.
// Particles listed in `held` are kinematic and skipped.
void relax_step(FabricState& s, const std::vector<Spring>& springs, const PhysicsParams& phys,
                std::vector<Vec2>& vel, std::vector<Vec2>& force,
                const std::vector<uint8_t>& held) {
  accumulate_forces(s, springs, phys, force);
  for (size_t i = 0; i < s.active.size(); ++i) {
    if (!s.active[i] || held[i]) continue;
    Vec2 f = force[i];
    double vmag = vel[i].norm();
    if (vmag < phys.v_stop && f.norm() <= phys.f_static) {
      vel[i] = {0, 0};
      continue;
    }
    if (vmag >= phys.v_stop) f -= vel[i] * (phys.f_kinetic / vmag);
    vel[i] = (vel[i] + f * (phys.dt / phys.mass)) * phys.damping;
    if (vel[i].norm() < phys.v_stop) vel[i] = {0, 0};
    s.pos[i] += vel[i] * phys.dt;
  }
}

void relax_n(FabricState& s, const std::vector<Spring>& springs, const PhysicsParams& phys,
             int iters, std::vector<Vec2>& vel, std::vector<Vec2>& force,
             const std::vector<uint8_t>& held) {
  for (int it = 0; it < iters; ++it) relax_step(s, springs, phys, vel, force, held);
}

// Shared hoist for apply_pull and crumple drags: kinematically drag the patch
// near contact (world coords) along dir for dist meters, then settle.
struct DragResult {
  bool missed = false;
  double energy_drag_end = 0.0;
  double energy_settled = 0.0;
};

DragResult drag_world(FabricState& s, const Vec2& contact, const Vec2& dir, double dist,
                      const PhysicsParams& phys) {
  double radius = grab_radius(s);
  int nearest = -1;
  double best = radius;
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      int i = s.idx(r, c);
      if (!s.active[i]) continue;
      double d = (s.pos[i] - contact).norm();
      if (d <= best) {
        best = d;
        nearest = i;
      }
    }
  }
  DragResult out;
  if (nearest < 0) {
    out.missed = true;
    return out;
  }

  // Grab one patch: within reach of the contact AND lattice-adjacent to the
  // nearest particle, so an overlapping lower layer is left alone.
  int nr = nearest / s.cols, nc = nearest % s.cols;
  std::vector<uint8_t> held(s.active.size(), 0);
  for (int r = std::max(0, nr - 2); r <= std::min(s.rows - 1, nr + 2); ++r) {
    for (int c = std::max(0, nc - 2); c <= std::min(s.cols - 1, nc + 2); ++c) {
      int i = s.idx(r, c);
      if (s.active[i] && (s.pos[i] - contact).norm() <= radius) held[i] = 1;
    }
  }

  std::vector<Spring> springs = build_springs(s);
  std::vector<Vec2> vel(s.active.size(), Vec2{0, 0});
  std::vector<Vec2> force(s.active.size(), Vec2{0, 0});

  Vec2 step = dir * (dist / phys.drive_substeps);
  for (int sub = 0; sub < phys.drive_substeps; ++sub) {
    for (size_t i = 0; i < held.size(); ++i) {
      if (held[i]) s.pos[i] += step;
    }
    relax_n(s, springs, phys, phys.drive_inner_iters, vel, force, held);
  }
  out.energy_drag_end = spring_energy(s, phys);

  // Release at rest: settling can only dissipate from here.
  std::fill(vel.begin(), vel.end(), Vec2{0, 0});
  std::fill(held.begin(), held.end(), 0);
  relax_n(s, springs, phys, phys.relax_iters, vel, force, held);
  out.energy_settled = spring_energy(s, phys);
  return out;
}

void clamp_to_window(FabricState& s, const RenderConfig& cfg) {
  double half_w = cfg.world_window * 0.5;
  double half_h = cfg.height / cfg.px_per_m() * 0.5;
  int inside = 0, total = 0;
  for (size_t i = 0; i < s.active.size(); ++i) {
    if (!s.active[i]) continue;
    ++total;
    if (std::fabs(s.pos[i].x) <= half_w && std::fabs(s.pos[i].y) <= half_h) ++inside;
  }
  if (total == 0 || inside * 2 >= total) return;
  Vec2 shift = Vec2{0, 0} - s.centroid();
  for (size_t i = 0; i < s.active.size(); ++i) {
    if (s.active[i]) s.pos[i] += shift;
  }
}

double bbox_extent(const FabricState& s) {
  double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
  for (size_t i = 0; i < s.active.size(); ++i) {
    if (!s.active[i]) continue;
    lo_x = std::min(lo_x, s.pos[i].x);
    hi_x = std::max(hi_x, s.pos[i].x);
    lo_y = std::min(lo_y, s.pos[i].y);
    hi_y = std::max(hi_y, s.pos[i].y);
  }
  return std::max(hi_x - lo_x, hi_y - lo_y);
}

}  // namespace

FabricState make_flat_state(ShapeKind kind, int rows, int cols, double rest_spacing,
                            uint64_t seed) {
  if (rows < 8 || cols < 8) throw ConfigError("fabric grid must be at least 8x8");
  if (!(rest_spacing > 0)) throw ConfigError("rest_spacing must be positive");
  FabricState s;
  s.rows = rows;
  s.cols = cols;
  s.rest_spacing = rest_spacing;
  s.rng_seed = seed;
  s.active.assign(size_t(rows) * cols, 0);
  s.pos.assign(size_t(rows) * cols, Vec2{0, 0});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int i = s.idx(r, c);
      s.active[i] = shape_cell(kind, r, c, rows, cols) ? 1 : 0;
      s.pos[i] = {(c - (cols - 1) * 0.5) * rest_spacing, (r - (rows - 1) * 0.5) * rest_spacing};
    }
  }
  return s;
}

FabricState crumple(const FabricState& state, CrumpleLevel level, uint64_t seed,
                    const PhysicsParams& phys) {
  phys.validate();
  FabricState s = state;
  s.rng_seed = seed;
  Rng rng(seed, 0xC101);

  auto inward_drag = [&](FabricState& st) {
    // Drag a random particle toward the centroid (plus angular jitter) for a
    // good fraction of the cloth extent; bunches fabric so coverage drops.
    std::vector<int> ids;
    for (size_t i = 0; i < st.active.size(); ++i) {
      if (st.active[i]) ids.push_back(int(i));
    }
    int pick = ids[rng.uniform_index(ids.size())];
    Vec2 c = st.centroid();
    Vec2 to_center = c - st.pos[pick];
    double base = std::atan2(to_center.y, to_center.x);
    double ang = base + rng.uniform(-1.0, 1.0);
    double dist = rng.uniform(0.25, 0.5) * bbox_extent(st);
    drag_world(st, st.pos[pick], Vec2{std::cos(ang), std::sin(ang)}, dist, phys);
  };

  auto random_fold = [&](FabricState& st) {
    Vec2 c = st.centroid();
    double ext = bbox_extent(st);
    Vec2 point = c + Vec2{rng.uniform(-0.1, 0.1) * ext, rng.uniform(-0.1, 0.1) * ext};
    double ang = rng.uniform(-M_PI, M_PI);
    Vec2 n{std::cos(ang), std::sin(ang)};
    // Fold the smaller side over so the result is a flap, not a full flip.
    int pos_side = 0, total = 0;
    for (size_t i = 0; i < st.active.size(); ++i) {
      if (!st.active[i]) continue;
      ++total;
      if ((st.pos[i] - point).dot(n) > 0) ++pos_side;
    }
    if (pos_side * 2 > total) n = Vec2{0, 0} - n;
    st = fold_across_line(st, point, n);
  };

  if (level == CrumpleLevel::Easy) {
    inward_drag(s);
    inward_drag(s);
  } else {
    inward_drag(s);
    inward_drag(s);
    random_fold(s);
    inward_drag(s);
    inward_drag(s);
    inward_drag(s);
  }
  if (!s.all_finite()) throw ContractError("crumple produced non-finite positions");
  return s;
}

PullOutcome apply_pull(const FabricState& state, const PullAction& action,
                       const RenderConfig& cfg, const PhysicsParams& phys) {
  cfg.validate();
  phys.validate();
  if (action.x < 0 || action.x >= cfg.width || action.y < 0 || action.y >= cfg.height) {
    throw ContractError("pull pixel outside the rendered image");
  }
  if (!(action.d >= 0) || !std::isfinite(action.d)) {
    throw ContractError("pull distance must be finite and non-negative");
  }
  PullOutcome out;
  out.state = state;
  Vec2 contact = cfg.px_to_world({action.x + 0.5, action.y + 0.5});  // pixel center
  Vec2 dir{std::cos(action.theta), std::sin(action.theta)};
  double dist = action.d / cfg.px_per_m();
  DragResult r = drag_world(out.state, contact, dir, dist, phys);
  if (r.missed) {
    out.state = state;  // untouched on a miss
    out.missed = true;
    return out;
  }
  out.energy_drag_end = r.energy_drag_end;
  out.energy_settled = r.energy_settled;
  clamp_to_window(out.state, cfg);
  if (!out.state.all_finite()) throw ContractError("pull produced non-finite positions");
  return out;
}

namespace {

struct PxPoint {
  double x, y;
};

// Top-left fill rule on pixel centers; shared edges between adjacent quads
// land in exactly one of them.
void raster_triangle(Plane<int32_t>& count, PxPoint a, PxPoint b, PxPoint c) {
  double area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  if (area2 == 0.0) return;
  if (area2 < 0.0) {
    std::swap(b, c);
    area2 = -area2;
  }
  auto edge = [](const PxPoint& p, const PxPoint& q, double px, double py) {
    return (q.x - p.x) * (py - p.y) - (q.y - p.y) * (px - p.x);
  };
  // With y down and counter-clockwise winding, interior points give edge >= 0.
  auto top_left = [](const PxPoint& p, const PxPoint& q) {
    return (p.y == q.y && q.x < p.x) || q.y < p.y;
  };
  bool tl_ab = top_left(a, b), tl_bc = top_left(b, c), tl_ca = top_left(c, a);
  int x0 = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
  int x1 = std::min(count.cols - 1, int(std::ceil(std::max({a.x, b.x, c.x}))));
  int y0 = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
  int y1 = std::min(count.rows - 1, int(std::ceil(std::max({a.y, b.y, c.y}))));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5, py = y + 0.5;
      double w0 = edge(a, b, px, py);
      double w1 = edge(b, c, px, py);
      double w2 = edge(c, a, px, py);
      bool in = (w0 > 0 || (w0 == 0 && tl_ab)) && (w1 > 0 || (w1 == 0 && tl_bc)) &&
                (w2 > 0 || (w2 == 0 && tl_ca));
      if (in) count.at(y, x) += 1;
    }
  }
}

}  // namespace

RenderResult render(const FabricState& state, const RenderConfig& cfg) {
  cfg.validate();
  if (!state.all_finite()) throw ContractError("render of non-finite fabric state");
  Plane<int32_t> count(cfg.height, cfg.width, 0);
  for (int r = 0; r + 1 < state.rows; ++r) {
    for (int c = 0; c + 1 < state.cols; ++c) {
      if (!(state.is_active(r, c) && state.is_active(r, c + 1) && state.is_active(r + 1, c) &&
            state.is_active(r + 1, c + 1))) {
        continue;
      }
      Vec2 p00 = cfg.world_to_px(state.pos[state.idx(r, c)]);
      Vec2 p01 = cfg.world_to_px(state.pos[state.idx(r, c + 1)]);
      Vec2 p10 = cfg.world_to_px(state.pos[state.idx(r + 1, c)]);
      Vec2 p11 = cfg.world_to_px(state.pos[state.idx(r + 1, c + 1)]);
      PxPoint a{p00.x, p00.y}, b{p01.x, p01.y}, d{p10.x, p10.y}, e{p11.x, p11.y};
      raster_triangle(count, a, b, e);
      raster_triangle(count, a, e, d);
    }
  }
  RenderResult out;
  out.mask = MaskPlane(cfg.height, cfg.width, 0);
  out.rgb = ImageRGB(cfg.height, cfg.width);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      int n = count.at(y, x);
      uint8_t* px = out.rgb.px(y, x);
      if (n <= 0) {
        px[0] = cfg.background_color[0];
        px[1] = cfg.background_color[1];
        px[2] = cfg.background_color[2];
        continue;
      }
      out.mask.at(y, x) = 1;
      // Overlap count darkens the pixel so folds are visible to the model.
      double shade = std::max(0.45, 1.0 - 0.12 * (n - 1));
      for (int k = 0; k < 3; ++k) {
        px[k] = uint8_t(std::lround(cfg.garment_color[k] * shade));
      }
    }
  }
  return out;
}

MetricPair metrics(const MaskPlane& current_mask, const MaskPlane& flat_reference_mask,
                   const MaskPlane* target_mask) {
  require_same_shape(current_mask, flat_reference_mask);
  int flat_area = mask_area(flat_reference_mask);
  if (flat_area == 0) throw ConfigError("flat reference mask has zero area");
  MetricPair out;
  out.coverage = double(mask_area(current_mask)) / flat_area;
  if (target_mask != nullptr) {
    require_same_shape(current_mask, *target_mask);
    int inter = 0, uni = 0;
    for (size_t i = 0; i < current_mask.v.size(); ++i) {
      bool a = current_mask.v[i] != 0, b = target_mask->v[i] != 0;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
    out.iou = uni > 0 ? double(inter) / uni : 0.0;
  }
  return out;
}

FabricState fold_across_line(const FabricState& state, const Vec2& line_point,
                             const Vec2& line_normal) {
  double nn = line_normal.norm();
  if (nn < 1e-12) throw ContractError("fold line normal is degenerate");
  Vec2 n = line_normal / nn;
  FabricState s = state;
  for (size_t i = 0; i < s.active.size(); ++i) {
    if (!s.active[i]) continue;
    double side = (s.pos[i] - line_point).dot(n);
    if (side > 0) s.pos[i] -= n * (2.0 * side);
  }
  return s;
}

double spring_energy(const FabricState& state, const PhysicsParams& phys) {
  std::vector<Spring> springs = build_springs(state);
  double e = 0.0;
  for (const Spring& sp : springs) {
    double len = (state.pos[sp.b] - state.pos[sp.a]).norm();
    double ext = len - sp.rest;
    double k = ext > 0 ? phys.k_tension : phys.k_compress;
    e += 0.5 * k * ext * ext;
  }
  return e;
}

FabricState settle(const FabricState& state, int iters, const PhysicsParams& phys) {
  phys.validate();
  FabricState s = state;
  std::vector<Spring> springs = build_springs(s);
  std::vector<Vec2> vel(s.active.size(), Vec2{0, 0});
  std::vector<Vec2> force(s.active.size(), Vec2{0, 0});
  std::vector<uint8_t> held(s.active.size(), 0);
  relax_n(s, springs, phys, iters, vel, force, held);
  return s;
}

}  // namespace afw
