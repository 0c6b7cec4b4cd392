#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/actionfield.hpp"
#include "core/losses.hpp"
#include "core/simcloth.hpp"

namespace afw {

// Lattice parameters of the simulated garment.
struct SceneConfig {
  std::string shape = "rectangle";
  int grid_rows = 16;
  int grid_cols = 16;
  double rest_spacing = 0.01;

  void validate() const;
  ShapeKind shape_kind() const { return shape_kind_from_string(shape); }
};

enum class TaskKind { Smoothing, Alignment };

TaskKind task_from_string(const std::string& name);
const char* to_string(TaskKind task);

struct TrainingSample {
  ImageRGB rgb;
  MaskPlane current_mask;
  MaskPlane target_mask;  // empty for smoothing
  PullAction action;
  int action_px_x = 0;  // integer pixel of M_Action
  int action_px_y = 0;
  double gt_s = 0.0;    // post - pre metric delta
  double gt_sin = 0.0;
  double gt_cos = 1.0;
  double gt_d = 0.0;    // scale-factor units, d / d_b
  int64_t episode_id = 0;
  int32_t step_id = 0;
  uint64_t seed = 0;    // episode seed
  std::string shape;
  std::string level;

  bool operator==(const TrainingSample& o) const;
};

struct RefinePolicy {
  double discard_below = 0.0;
  int n_bins = 10;
  // Bins over [0, max]; every bin is capped at the median count of the
  // nonempty bins by seeded uniform subsampling.
  uint64_t subsample_seed = 0;

  void validate() const;
};

// Crumpled (and, for alignment, randomly offset) start state for an episode
// or evaluation scene. Deterministic per seed.
FabricState make_initial_state(TaskKind task, const SceneConfig& scene, CrumpleLevel level,
                               uint64_t seed, const RenderConfig& cfg,
                               const PhysicsParams& phys = {});

// Canonical flattened-pose mask; the alignment target and coverage reference.
MaskPlane make_target_mask(ShapeKind kind, const SceneConfig& scene, const RenderConfig& cfg);

// One data-collection episode: crumple once, then chain random pulls,
// labeling each with the task metric's change. Missed pulls are resampled up
// to 10 times, then the step is skipped.
std::vector<TrainingSample> sample_episode(TaskKind task, const SceneConfig& scene,
                                           CrumpleLevel level, uint64_t seed,
                                           int steps_per_episode, int64_t episode_id,
                                           const RenderConfig& cfg, const DistanceLaw& law,
                                           const PhysicsParams& phys = {});

// Label pruning: drop negative scores, then flatten the score histogram by
// capping every bin at the median nonempty-bin count.
std::vector<TrainingSample> refine(const std::vector<TrainingSample>& samples,
                                   const RefinePolicy& policy);

// Builds the per-sample loss masks and targets. need_target pulls in the
// stored target mask (alignment / shape loss).
SupervisionBundle make_supervision(const TrainingSample& sample, int enlarge_radius,
                                   bool need_target);

void write_dataset(const std::vector<TrainingSample>& samples, const std::string& root,
                   TaskKind task, const RenderConfig& cfg, const SceneConfig& scene,
                   const DistanceLaw& law);

std::vector<TrainingSample> read_dataset(const std::string& root);

// SHA-256 over every file in the dataset directory, tied together in sorted
// path order. Byte-identical datasets digest identically.
std::string dataset_digest(const std::string& root);

// Replays the sample's episode prefix from its seed and re-derives gt_s.
double resimulate_gt(const std::vector<TrainingSample>& episode_rows, size_t row,
                     TaskKind task, const SceneConfig& scene, const RenderConfig& cfg,
                     const DistanceLaw& law, const PhysicsParams& phys = {});

extern const char* kDatasetSchemaVersion;  // "afw-1"

}  // namespace afw
