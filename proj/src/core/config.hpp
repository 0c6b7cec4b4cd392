#pragma once

#include <string>

#include <json.hpp>

#include "core/actionfield.hpp"
#include "core/datagen.hpp"
#include "core/losses.hpp"
#include "core/netmodel.hpp"
#include "core/simcloth.hpp"

namespace afw {

struct EvalConfig {
  int n_scenes = 50;
  int max_steps = 0;  // 0 = task default: 10 smoothing, 36 alignment
  double stability_eps = 0.005;
  int stability_window = 3;
  uint64_t seed_base = 9000;
  std::string level = "hard";

  void validate() const;
  int steps_for(TaskKind task) const {
    if (max_steps > 0) return max_steps;
    return task == TaskKind::Smoothing ? 10 : 36;
  }
};

// The single workbench config file. The loss_weights section is the source
// of truth; loading copies it into train.loss_weights.
struct WorkbenchConfig {
  RenderConfig render;
  SceneConfig scene;
  DistanceLaw distance_law;
  LossWeights loss_weights;
  ModelConfig model;
  TrainConfig train;
  RefinePolicy refine;
  EvalConfig eval;
  PhysicsParams physics;

  void validate() const;
};

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);
void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);
void to_json(nlohmann::json& j, const DistanceLaw& c);
void from_json(const nlohmann::json& j, DistanceLaw& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const StageSpec& c);
void from_json(const nlohmann::json& j, StageSpec& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RefinePolicy& c);
void from_json(const nlohmann::json& j, RefinePolicy& c);
void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);
void to_json(nlohmann::json& j, const PhysicsParams& c);
void from_json(const nlohmann::json& j, PhysicsParams& c);
void to_json(nlohmann::json& j, const WorkbenchConfig& c);
void from_json(const nlohmann::json& j, WorkbenchConfig& c);

WorkbenchConfig load_config(const std::string& path);
void save_config(const std::string& path, const WorkbenchConfig& cfg);

// Applies one "section.key=value" override; values parse as JSON with a
// plain-string fallback.
void apply_override(WorkbenchConfig& cfg, const std::string& assignment);

// Slimmed desk-scale preset: 64x64 input, shallow encoder, narrow heads.
WorkbenchConfig desk_config();

}  // namespace afw
