#include "core/config.hpp"

#include <fstream>

#include "core/imageio.hpp"

using nlohmann::json;

namespace afw {

void EvalConfig::validate() const {
  if (n_scenes < 1) throw ConfigError("eval.n_scenes must be >= 1");
  if (max_steps < 0) throw ConfigError("eval.max_steps must be >= 0");
  if (!(stability_eps > 0)) throw ConfigError("eval.stability_eps must be positive");
  if (stability_window < 1) throw ConfigError("eval.stability_window must be >= 1");
  crumple_level_from_string(level);
}

void WorkbenchConfig::validate() const {
  render.validate();
  scene.validate();
  distance_law.validate();
  loss_weights.validate();
  model.validate();
  train.validate();
  refine.validate();
  eval.validate();
  physics.validate();
  if (model.input_h != render.height || model.input_w != render.width) {
    throw ConfigError("model input size must match the render size");
  }
}

void to_json(json& j, const RenderConfig& c) {
  j = json{{"height", c.height},
           {"width", c.width},
           {"world_window", c.world_window},
           {"garment_color", c.garment_color},
           {"background_color", c.background_color}};
}

void from_json(const json& j, RenderConfig& c) {
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.world_window = j.value("world_window", c.world_window);
  c.garment_color = j.value("garment_color", c.garment_color);
  c.background_color = j.value("background_color", c.background_color);
}

void to_json(json& j, const SceneConfig& c) {
  j = json{{"shape", c.shape},
           {"grid_rows", c.grid_rows},
           {"grid_cols", c.grid_cols},
           {"rest_spacing", c.rest_spacing}};
}

void from_json(const json& j, SceneConfig& c) {
  c.shape = j.value("shape", c.shape);
  c.grid_rows = j.value("grid_rows", c.grid_rows);
  c.grid_cols = j.value("grid_cols", c.grid_cols);
  c.rest_spacing = j.value("rest_spacing", c.rest_spacing);
}

void to_json(json& j, const DistanceLaw& c) {
  j = json{{"d_b", c.d_b}, {"d_scale", c.d_scale}, {"d_offset", c.d_offset}};
}

void from_json(const json& j, DistanceLaw& c) {
  c.d_b = j.value("d_b", c.d_b);
  c.d_scale = j.value("d_scale", c.d_scale);
  c.d_offset = j.value("d_offset", c.d_offset);
}

void to_json(json& j, const LossWeights& c) {
  j = json{{"lambda_b", c.lambda_b},
           {"lambda_p", c.lambda_p},
           {"lambda_a", c.lambda_a},
           {"lambda_d", c.lambda_d},
           {"lambda_s", c.lambda_s}};
}

void from_json(const json& j, LossWeights& c) {
  c.lambda_b = j.value("lambda_b", c.lambda_b);
  c.lambda_p = j.value("lambda_p", c.lambda_p);
  c.lambda_a = j.value("lambda_a", c.lambda_a);
  c.lambda_d = j.value("lambda_d", c.lambda_d);
  c.lambda_s = j.value("lambda_s", c.lambda_s);
}

void to_json(json& j, const StageSpec& c) {
  j = json{{"blocks", c.blocks}, {"channels", c.channels}, {"stride", c.stride}};
}

void from_json(const json& j, StageSpec& c) {
  c.blocks = j.value("blocks", c.blocks);
  c.channels = j.value("channels", c.channels);
  c.stride = j.value("stride", c.stride);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_h", c.input_h},
           {"input_w", c.input_w},
           {"stem_downsample", c.stem_downsample},
           {"stem_channels", c.stem_channels},
           {"encoder_stages", c.encoder_stages},
           {"decoder_channels", c.decoder_channels},
           {"score_head_stages", c.score_head_stages},
           {"head_channel_schedule", c.head_channel_schedule},
           {"se_reduction", c.se_reduction},
           {"use_se", c.use_se},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  c.input_h = j.value("input_h", c.input_h);
  c.input_w = j.value("input_w", c.input_w);
  c.stem_downsample = j.value("stem_downsample", c.stem_downsample);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.encoder_stages = j.value("encoder_stages", c.encoder_stages);
  c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
  c.score_head_stages = j.value("score_head_stages", c.score_head_stages);
  c.head_channel_schedule = j.value("head_channel_schedule", c.head_channel_schedule);
  c.se_reduction = j.value("se_reduction", c.se_reduction);
  c.use_se = j.value("use_se", c.use_se);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},
           {"optimizer_kind", c.optimizer_kind},
           {"weight_decay", c.weight_decay},
           {"task", c.task},
           {"loss_weights", c.loss_weights},
           {"enlarge_radius", c.enlarge_radius},
           {"checkpoint_every", c.checkpoint_every},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.optimizer_kind = j.value("optimizer_kind", c.optimizer_kind);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.task = j.value("task", c.task);
  if (j.contains("loss_weights")) c.loss_weights = j.at("loss_weights").get<LossWeights>();
  c.enlarge_radius = j.value("enlarge_radius", c.enlarge_radius);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const RefinePolicy& c) {
  j = json{{"discard_below", c.discard_below},
           {"n_bins", c.n_bins},
           {"subsample_seed", c.subsample_seed}};
}

void from_json(const json& j, RefinePolicy& c) {
  c.discard_below = j.value("discard_below", c.discard_below);
  c.n_bins = j.value("n_bins", c.n_bins);
  c.subsample_seed = j.value("subsample_seed", c.subsample_seed);
}

void to_json(json& j, const EvalConfig& c) {
  j = json{{"n_scenes", c.n_scenes},
           {"max_steps", c.max_steps},
           {"stability_eps", c.stability_eps},
           {"stability_window", c.stability_window},
           {"seed_base", c.seed_base},
           {"level", c.level}};
}

void from_json(const json& j, EvalConfig& c) {
  c.n_scenes = j.value("n_scenes", c.n_scenes);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.stability_eps = j.value("stability_eps", c.stability_eps);
  c.stability_window = j.value("stability_window", c.stability_window);
  c.seed_base = j.value("seed_base", c.seed_base);
  c.level = j.value("level", c.level);
}

void to_json(json& j, const PhysicsParams& c) {
  j = json{{"mass", c.mass},
           {"k_tension", c.k_tension},
           {"k_compress", c.k_compress},
           {"f_static", c.f_static},
           {"f_kinetic", c.f_kinetic},
           {"dt", c.dt},
           {"damping", c.damping},
           {"drive_substeps", c.drive_substeps},
           {"drive_inner_iters", c.drive_inner_iters},
           {"relax_iters", c.relax_iters},
           {"v_stop", c.v_stop}};
}

void from_json(const json& j, PhysicsParams& c) {
  c.mass = j.value("mass", c.mass);
  c.k_tension = j.value("k_tension", c.k_tension);
  c.k_compress = j.value("k_compress", c.k_compress);
  c.f_static = j.value("f_static", c.f_static);
  c.f_kinetic = j.value("f_kinetic", c.f_kinetic);
  c.dt = j.value("dt", c.dt);
  c.damping = j.value("damping", c.damping);
  c.drive_substeps = j.value("drive_substeps", c.drive_substeps);
  c.drive_inner_iters = j.value("drive_inner_iters", c.drive_inner_iters);
  c.relax_iters = j.value("relax_iters", c.relax_iters);
  c.v_stop = j.value("v_stop", c.v_stop);
}

void to_json(json& j, const WorkbenchConfig& c) {
  j = json{{"render", c.render},
           {"scene", c.scene},
           {"distance_law", c.distance_law},
           {"loss_weights", c.loss_weights},
           {"model", c.model},
           {"train", c.train},
           {"refine", c.refine},
           {"eval", c.eval},
           {"physics", c.physics}};
  // train.loss_weights mirrors the section; drop the copy in the file.
  j["train"].erase("loss_weights");
}

void from_json(const json& j, WorkbenchConfig& c) {
  if (j.contains("render")) from_json(j.at("render"), c.render);
  if (j.contains("scene")) from_json(j.at("scene"), c.scene);
  if (j.contains("distance_law")) from_json(j.at("distance_law"), c.distance_law);
  if (j.contains("loss_weights")) from_json(j.at("loss_weights"), c.loss_weights);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("refine")) from_json(j.at("refine"), c.refine);
  if (j.contains("eval")) from_json(j.at("eval"), c.eval);
  if (j.contains("physics")) from_json(j.at("physics"), c.physics);
  c.train.loss_weights = c.loss_weights;
}

WorkbenchConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  WorkbenchConfig cfg;
  from_json(j, cfg);
  cfg.validate();
  return cfg;
}

void save_config(const std::string& path, const WorkbenchConfig& cfg) {
  json j = cfg;
  write_text_file(path, j.dump(2) + "\n");
}

void apply_override(WorkbenchConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings like shape names
  }
  json j = cfg;
  json* node = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      if (!node->is_object() || !node->contains(key)) {
        throw ConfigError("unknown config key '" + path + "'");
      }
      (*node)[key] = value;
      break;
    }
    if (!node->is_object() || !node->contains(key)) {
      throw ConfigError("unknown config key '" + path + "'");
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
  WorkbenchConfig next;
  from_json(j, next);
  cfg = next;
}

WorkbenchConfig desk_config() {
  WorkbenchConfig cfg;
  cfg.render.height = 64;
  cfg.render.width = 64;
  cfg.render.world_window = 0.25;
  cfg.scene.grid_rows = 24;
  cfg.scene.grid_cols = 24;
  cfg.scene.rest_spacing = 0.008;
  cfg.model.input_h = 64;
  cfg.model.input_w = 64;
  cfg.model.stem_downsample = false;
  cfg.model.stem_channels = 32;
  cfg.model.encoder_stages = {{1, 32, 2}, {1, 64, 2}, {1, 128, 2}, {1, 256, 2}};
  cfg.model.decoder_channels = {96, 64, 48, 16};
  cfg.model.head_channel_schedule = {32, 16, 8};
  cfg.train.batch_size = 16;
  cfg.train.epochs = 3;
  return cfg;
}

}  // namespace afw
