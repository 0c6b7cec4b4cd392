#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/datagen.hpp"
#include "core/netmodel.hpp"

namespace afw {

struct StepRecord {
  PullAction action;
  double coverage = 0.0;  // after the pull settles
  double iou = 0.0;
  double decision_latency_ms = 0.0;
  uint64_t forward_passes = 0;  // encoder-decoder passes consumed by this decision
};

struct RolloutRecord {
  std::string policy_name;
  uint64_t seed = 0;
  double initial_coverage = 0.0;
  double initial_iou = 0.0;
  std::vector<StepRecord> steps;
  std::string termination_reason;  // stable | max_steps | no_action
};

// Policies throw NoActionError when no executable pixel exists.
struct Policy {
  std::string name;
  std::function<PullAction(const ImageRGB& rgb, const MaskPlane& mask)> decide;
};

// One policy instance per rollout so per-seed results are order-independent.
using PolicyFactory = std::function<Policy(uint64_t rollout_seed)>;

// Uniform garment pixel, uniform direction, uniform distance in range.
PullAction baseline_random(const MaskPlane& mask, uint64_t seed, const DistanceLaw& law);

// Pulls the boundary pixel farthest from the mask centroid outward along the
// centroid ray, half the maximum distance.
PullAction baseline_radial(const MaskPlane& mask, const DistanceLaw& law);

PolicyFactory random_policy_factory(const DistanceLaw& law);
PolicyFactory radial_policy_factory(const DistanceLaw& law);
PolicyFactory model_policy_factory(std::shared_ptr<ModelNet> net, const DistanceLaw& law);

struct RolloutSetup {
  RenderConfig render;
  PhysicsParams physics;
  DistanceLaw law;
  MaskPlane flat_mask;    // coverage reference
  MaskPlane target_mask;  // empty outside alignment
  int max_steps = 10;
  double stability_eps = 0.005;
  int stability_window = 3;
};

// Greedy loop: render, decide, pull, measure; stops when |d coverage| stays
// below stability_eps for stability_window consecutive steps, at max_steps,
// or when the policy has no action.
RolloutRecord rollout(const Policy& policy, const FabricState& initial_state, TaskKind task,
                      const RolloutSetup& setup, uint64_t seed);

// Metric after executed step k (1-based) with last-value carry past the end;
// k=0 reads the initial value.
double coverage_at(const RolloutRecord& r, int k);
double iou_at(const RolloutRecord& r, int k);

struct SuiteSummary {
  std::string policy;
  std::string task;
  int n_scenes = 0;
  double mean_initial_coverage = 0.0;
  double mean_step3_coverage = 0.0;
  double mean_final_coverage = 0.0;
  double mean_step10_iou = 0.0;
  double mean_step36_iou = 0.0;
  double mean_final_iou = 0.0;
  double mean_steps = 0.0;
  std::vector<RolloutRecord> records;
};

// n_scenes rollouts on crumpled scenes seeded eval.seed_base + i.
SuiteSummary evaluate_suite(const PolicyFactory& factory, TaskKind task,
                            const WorkbenchConfig& cfg);

// Latency is excluded: summaries must be byte-stable across identical runs.
std::string summary_table(const SuiteSummary& s);
nlohmann::json summary_json(const SuiteSummary& s);
nlohmann::json rollout_json(const RolloutRecord& r);

// Generates the dataset under root unless a matching generation stamp is
// already present; returns the dataset digest. Episode i uses seed seed+i and
// alternates hard/easy crumpling.
std::string ensure_dataset(const WorkbenchConfig& cfg, TaskKind task, int episodes,
                           int steps_per_episode, uint64_t seed, const std::string& root);

// Trains (or resumes) a model for the config and dataset unless the cache
// already holds its checkpoint; returns the checkpoint path. The key digests
// the model/train/refine/law configs, the task, and the dataset digest.
std::string ensure_trained_model(const WorkbenchConfig& cfg, TaskKind task,
                                 const std::string& dataset_root, const std::string& cache_dir);

struct AblationVariant {
  std::string key;  // (a)..(h)
  bool se_block = false;
  bool action_enlarging = false;
  bool background_info = false;
};

// The eight score-map variants in (se, enlarge, background) binary order.
std::vector<AblationVariant> score_ablation_variants();

// se off clears model.use_se; enlarging off zeroes the radius; background off
// zeroes lambda_b.
WorkbenchConfig apply_variant(const WorkbenchConfig& base, const AblationVariant& v);

struct AblationRow {
  std::string key;
  SuiteSummary summary;
};

// One trained model per variant, identical data and seeds.
std::vector<AblationRow> run_ablation(const WorkbenchConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::string& dataset_root,
                                      const std::string& cache_dir);

// Table of alignment results across shape-loss weights (one model per weight).
std::vector<AblationRow> run_shape_sweep(const WorkbenchConfig& base,
                                         const std::vector<double>& weights,
                                         const std::string& dataset_root,
                                         const std::string& cache_dir);

// Per-step metric curves rendered to a PPM line plot plus a CSV table with
// the same series. Series are step-indexed from 0 (initial value first).
void write_curve_plot(const std::string& ppm_path, const std::string& csv_path,
                      const std::vector<std::vector<double>>& series,
                      const std::vector<std::string>& labels);

// Reads every rollout record under run_dir/records/ and renders coverage and
// IoU curves (one series per rollout) into run_dir/plots/.
void plot_run_dir(const std::string& run_dir);

}  // namespace afw
