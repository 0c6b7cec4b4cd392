#include "afw.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/config.hpp"
#include "core/evalharness.hpp"
#include "core/imageio.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

int capture_error() {
  try {
    throw;
  } catch (const afw::ConfigError& e) {
    g_last_error = e.what();
    return AFW_ERR_CONFIG;
  } catch (const afw::NoActionError& e) {
    g_last_error = e.what();
    return AFW_ERR_NO_ACTION;
  } catch (const afw::DegenerateAngleError& e) {
    g_last_error = e.what();
    return AFW_ERR_NO_ACTION;
  } catch (const afw::ContractError& e) {
    g_last_error = e.what();
    return AFW_ERR_CONTRACT;
  } catch (const afw::DataError& e) {
    g_last_error = e.what();
    return AFW_ERR_DATA;
  } catch (const afw::TrainError& e) {
    g_last_error = e.what();
    return AFW_ERR_TRAIN;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AFW_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return AFW_ERR_RUNTIME;
  }
}

int require(bool ok, const char* msg) {
  if (ok) return AFW_OK;
  g_last_error = msg;
  return AFW_ERR_CONTRACT;
}

int copy_hex(char out[65], const std::string& hex) {
  if (hex.size() != 64) {
    g_last_error = "digest is not 64 hex chars";
    return AFW_ERR_RUNTIME;
  }
  std::memcpy(out, hex.c_str(), 65);
  return AFW_OK;
}

afw::PolicyFactory policy_factory_by_name(const std::string& policy, const char* checkpoint,
                                          const afw::WorkbenchConfig& cfg) {
  if (policy == "random") return afw::random_policy_factory(cfg.distance_law);
  if (policy == "radial") return afw::radial_policy_factory(cfg.distance_law);
  if (policy == "model") {
    if (checkpoint == nullptr) {
      throw afw::ConfigError("the model policy requires a checkpoint");
    }
    afw::LoadedCheckpoint ck = afw::load_checkpoint(checkpoint);
    auto net = std::make_shared<afw::ModelNet>(ck.model);
    afw::apply_params(*net, ck.params);
    return afw::model_policy_factory(net, cfg.distance_law);
  }
  throw afw::ConfigError("unknown policy '" + policy + "'");
}

}  // namespace

struct afw_config {
  afw::WorkbenchConfig cfg;
};

struct afw_model {
  afw::ModelNet net;
  afw::DistanceLaw law;
};

struct afw_sim {
  afw::WorkbenchConfig cfg;
  afw::TaskKind task = afw::TaskKind::Smoothing;
  afw::FabricState state;
  afw::MaskPlane flat;
};

extern "C" {

const char* afw_last_error(void) { return g_last_error.c_str(); }

afw_config* afw_config_default(void) { return new afw_config{afw::WorkbenchConfig{}}; }

afw_config* afw_config_desk(void) { return new afw_config{afw::desk_config()}; }

int afw_config_load(const char* path, afw_config** out) {
  if (int rc = require(path && out, "afw_config_load: null argument")) return rc;
  try {
    auto* h = new afw_config{afw::load_config(path)};
    *out = h;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_config_save(const afw_config* cfg, const char* path) {
  if (int rc = require(cfg && path, "afw_config_save: null argument")) return rc;
  try {
    afw::save_config(path, cfg->cfg);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_config_override(afw_config* cfg, const char* assignment) {
  if (int rc = require(cfg && assignment, "afw_config_override: null argument")) return rc;
  try {
    afw::apply_override(cfg->cfg, assignment);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_config_dump(const afw_config* cfg, char** json_out) {
  if (int rc = require(cfg && json_out, "afw_config_dump: null argument")) return rc;
  try {
    json j = cfg->cfg;
    std::string s = j.dump(2);
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *json_out = buf;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

void afw_config_free(afw_config* cfg) { delete cfg; }

void afw_string_free(char* s) { delete[] s; }

int afw_file_digest(const char* path, char out_hex65[65]) {
  if (int rc = require(path && out_hex65, "afw_file_digest: null argument")) return rc;
  try {
    return copy_hex(out_hex65, afw::sha256_file_hex(path));
  } catch (...) {
    return capture_error();
  }
}

int afw_dataset_digest(const char* root, char out_hex65[65]) {
  if (int rc = require(root && out_hex65, "afw_dataset_digest: null argument")) return rc;
  try {
    return copy_hex(out_hex65, afw::dataset_digest(root));
  } catch (...) {
    return capture_error();
  }
}

int afw_gen_data(const afw_config* cfg, const char* task, int episodes,
                 int steps_per_episode, unsigned long long seed, const char* out_dir,
                 char digest_out_hex65[65]) {
  if (int rc = require(cfg && task && out_dir, "afw_gen_data: null argument")) return rc;
  try {
    std::string digest = afw::ensure_dataset(cfg->cfg, afw::task_from_string(task), episodes,
                                             steps_per_episode, seed, out_dir);
    if (digest_out_hex65) return copy_hex(digest_out_hex65, digest);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_train_model(const afw_config* cfg, const char* task, const char* data_dir,
                    const char* out_dir, int resume) {
  if (int rc = require(cfg && task && data_dir && out_dir, "afw_train_model: null argument")) {
    return rc;
  }
  try {
    afw::TaskKind kind = afw::task_from_string(task);
    afw::TrainConfig tc = cfg->cfg.train;
    tc.task = afw::to_string(kind);
    tc.validate();

    std::vector<afw::TrainingSample> refined;
    {
      std::vector<afw::TrainingSample> raw = afw::read_dataset(data_dir);
      if (kind == afw::TaskKind::Alignment && tc.loss_weights.lambda_s != 0.0 &&
          !raw.empty() && raw.front().target_mask.v.empty()) {
        throw afw::ConfigError("alignment training requires a dataset with target masks");
      }
      refined = afw::refine(raw, cfg->cfg.refine);
    }

    afw::ModelNet net(cfg->cfg.model);
    afw::AdamState adam;
    afw::TrainProgress start;
    std::string partial = std::string(out_dir) + "/checkpoint.bin";
    if (resume && std::filesystem::exists(partial)) {
      afw::LoadedCheckpoint ck = afw::load_checkpoint(partial);
      if (!(ck.model == cfg->cfg.model)) {
        throw afw::ConfigError("resume checkpoint was trained with a different model config");
      }
      afw::apply_params(net, ck.params);
      adam = std::move(ck.adam);
      start = ck.progress;
    }
    afw::train(net, refined, tc, cfg->cfg.distance_law, out_dir, &adam, start);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_ensure_model(const afw_config* cfg, const char* task, const char* data_dir,
                     const char* cache_dir, char* path_out, size_t path_cap) {
  if (int rc = require(cfg && task && data_dir && cache_dir && path_out,
                       "afw_ensure_model: null argument")) {
    return rc;
  }
  try {
    std::string path = afw::ensure_trained_model(cfg->cfg, afw::task_from_string(task),
                                                 data_dir, cache_dir);
    if (path.size() + 1 > path_cap) {
      g_last_error = "afw_ensure_model: path buffer too small";
      return AFW_ERR_CONTRACT;
    }
    std::memcpy(path_out, path.c_str(), path.size() + 1);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_rollout_once(const afw_config* cfg, const char* policy, const char* checkpoint,
                     const char* task, unsigned long long seed, const char* out_path) {
  if (int rc = require(cfg && policy && task && out_path, "afw_rollout_once: null argument")) {
    return rc;
  }
  try {
    const afw::WorkbenchConfig& wc = cfg->cfg;
    afw::TaskKind kind = afw::task_from_string(task);
    afw::PolicyFactory factory = policy_factory_by_name(policy, checkpoint, wc);

    afw::CrumpleLevel level = afw::crumple_level_from_string(wc.eval.level);
    afw::MaskPlane flat = afw::make_target_mask(wc.scene.shape_kind(), wc.scene, wc.render);
    afw::RolloutSetup setup;
    setup.render = wc.render;
    setup.physics = wc.physics;
    setup.law = wc.distance_law;
    setup.flat_mask = flat;
    if (kind == afw::TaskKind::Alignment) setup.target_mask = flat;
    setup.max_steps = wc.eval.steps_for(kind);
    setup.stability_eps = wc.eval.stability_eps;
    setup.stability_window = wc.eval.stability_window;

    afw::FabricState init =
        afw::make_initial_state(kind, wc.scene, level, seed, wc.render, wc.physics);
    afw::RolloutRecord rec = afw::rollout(factory(seed), init, kind, setup, seed);

    std::filesystem::path p(out_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    afw::write_text_file(out_path, afw::rollout_json(rec).dump(2) + "\n");
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_evaluate(const afw_config* cfg, const char* policy, const char* checkpoint,
                 const char* task, const char* out_dir) {
  if (int rc = require(cfg && policy && task && out_dir, "afw_evaluate: null argument")) {
    return rc;
  }
  try {
    const afw::WorkbenchConfig& wc = cfg->cfg;
    afw::TaskKind kind = afw::task_from_string(task);
    afw::PolicyFactory factory = policy_factory_by_name(policy, checkpoint, wc);
    afw::SuiteSummary s = afw::evaluate_suite(factory, kind, wc);

    std::filesystem::create_directories(std::string(out_dir) + "/records");
    for (const afw::RolloutRecord& rec : s.records) {
      std::string p = std::string(out_dir) + "/records/seed_" + std::to_string(rec.seed) +
                      ".json";
      afw::write_text_file(p, afw::rollout_json(rec).dump(2) + "\n");
    }
    afw::write_text_file(std::string(out_dir) + "/summary.txt", afw::summary_table(s));
    afw::write_text_file(std::string(out_dir) + "/summary.json",
                         afw::summary_json(s).dump(2) + "\n");
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_ablate(const afw_config* cfg, const char* variants, const char* shape_weights,
               const char* data_dir, const char* align_data_dir, const char* cache_dir,
               const char* out_dir) {
  if (int rc = require(cfg && cache_dir && out_dir, "afw_ablate: null argument")) return rc;
  try {
    const afw::WorkbenchConfig& wc = cfg->cfg;
    bool any = false;
    json table = json::array();
    std::string text;

    if (variants && variants[0]) {
      if (!data_dir) throw afw::ConfigError("variant ablation requires a smoothing dataset");
      auto all = afw::score_ablation_variants();
      std::vector<afw::AblationVariant> chosen;
      std::string keys = variants;
      for (size_t pos = 0; pos < keys.size();) {
        size_t comma = keys.find(',', pos);
        std::string item = keys.substr(pos, comma == std::string::npos ? std::string::npos
                                                                       : comma - pos);
        pos = comma == std::string::npos ? keys.size() : comma + 1;
        if (item.empty()) continue;
        if (item.size() != 1 || item[0] < 'a' || item[0] > 'h') {
          throw afw::ConfigError("unknown ablation variant '" + item + "'");
        }
        chosen.push_back(all[size_t(item[0] - 'a')]);
      }
      if (chosen.empty()) throw afw::ConfigError("empty ablation variant list");
      auto rows = afw::run_ablation(wc, chosen, data_dir, cache_dir);
      for (size_t i = 0; i < rows.size(); ++i) {
        const afw::AblationVariant& v = chosen[i];
        json row = afw::summary_json(rows[i].summary);
        row["variant"] = rows[i].key;
        row["se_block"] = v.se_block;
        row["action_enlarging"] = v.action_enlarging;
        row["background_info"] = v.background_info;
        table.push_back(row);
        char line[160];
        std::snprintf(line, sizeof(line), "%s se=%d enlarge=%d background=%d final_coverage=%.6f\n",
                      rows[i].key.c_str(), int(v.se_block), int(v.action_enlarging),
                      int(v.background_info), rows[i].summary.mean_final_coverage);
        text += line;
      }
      any = true;
    }

    if (shape_weights && shape_weights[0]) {
      if (!align_data_dir) {
        throw afw::ConfigError("the shape-weight sweep requires an alignment dataset");
      }
      std::vector<double> ws;
      std::string weights_csv = shape_weights;
      size_t pos = 0;
      while (pos < weights_csv.size()) {
        size_t comma = weights_csv.find(',', pos);
        std::string item = weights_csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                                       : comma - pos);
        pos = comma == std::string::npos ? weights_csv.size() : comma + 1;
        if (item.empty()) continue;
        try {
          ws.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw afw::ConfigError("bad shape weight '" + item + "'");
        }
      }
      if (ws.empty()) throw afw::ConfigError("empty shape weight list");
      auto rows = afw::run_shape_sweep(wc, ws, align_data_dir, cache_dir);
      for (const afw::AblationRow& r : rows) {
        json row = afw::summary_json(r.summary);
        row["variant"] = r.key;
        table.push_back(row);
        char line[160];
        std::snprintf(line, sizeof(line), "%s step10_iou=%.6f step36_iou=%.6f\n", r.key.c_str(),
                      r.summary.mean_step10_iou, r.summary.mean_step36_iou);
        text += line;
      }
      any = true;
    }

    if (!any) throw afw::ConfigError("ablation needs variants and/or shape weights");
    std::filesystem::create_directories(out_dir);
    afw::write_text_file(std::string(out_dir) + "/ablation.json", table.dump(2) + "\n");
    afw::write_text_file(std::string(out_dir) + "/ablation.txt", text);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_plot_run(const char* run_dir) {
  if (int rc = require(run_dir != nullptr, "afw_plot_run: null argument")) return rc;
  try {
    afw::plot_run_dir(run_dir);
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_model_open(const char* checkpoint_path, afw_model** out) {
  if (int rc = require(checkpoint_path && out, "afw_model_open: null argument")) return rc;
  try {
    afw::LoadedCheckpoint ck = afw::load_checkpoint(checkpoint_path);
    auto* h = new afw_model{afw::ModelNet(ck.model), ck.law};
    afw::apply_params(h->net, ck.params);
    *out = h;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_model_input_size(const afw_model* model, int* h, int* w) {
  if (int rc = require(model && h && w, "afw_model_input_size: null argument")) return rc;
  *h = model->net.config().input_h;
  *w = model->net.config().input_w;
  return AFW_OK;
}

int afw_model_predict(afw_model* model, const unsigned char* rgb, const unsigned char* mask,
                      int h, int w, double* x, double* y, double* theta, double* d) {
  if (int rc = require(model && rgb && mask && x && y && theta && d,
                       "afw_model_predict: null argument")) {
    return rc;
  }
  try {
    if (h != model->net.config().input_h || w != model->net.config().input_w) {
      throw afw::ContractError("image size does not match the model input size");
    }
    afw::ImageRGB img;
    img.rows = h;
    img.cols = w;
    img.v.assign(rgb, rgb + size_t(h) * size_t(w) * 3);
    afw::MaskPlane m(h, w, 0);
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = mask[i] ? 1 : 0;
    afw::ActionMaps maps = model->net.forward(img);
    afw::PullAction a = afw::select_action(maps, m, model->law);
    *x = a.x;
    *y = a.y;
    *theta = a.theta;
    *d = a.d;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

void afw_model_free(afw_model* model) { delete model; }

unsigned long long afw_forward_passes(void) { return afw::net_forward_passes(); }

int afw_sim_create(const afw_config* cfg, const char* task, const char* level,
                   unsigned long long seed, afw_sim** out) {
  if (int rc = require(cfg && task && level && out, "afw_sim_create: null argument")) return rc;
  try {
    const afw::WorkbenchConfig& wc = cfg->cfg;
    afw::TaskKind kind = afw::task_from_string(task);
    afw::CrumpleLevel lv = afw::crumple_level_from_string(level);
    auto* h = new afw_sim;
    h->cfg = wc;
    h->task = kind;
    h->state = afw::make_initial_state(kind, wc.scene, lv, seed, wc.render, wc.physics);
    h->flat = afw::make_target_mask(wc.scene.shape_kind(), wc.scene, wc.render);
    *out = h;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_sim_size(const afw_sim* sim, int* h, int* w) {
  if (int rc = require(sim && h && w, "afw_sim_size: null argument")) return rc;
  *h = sim->cfg.render.height;
  *w = sim->cfg.render.width;
  return AFW_OK;
}

int afw_sim_render(afw_sim* sim, unsigned char* rgb, unsigned char* mask) {
  if (int rc = require(sim != nullptr, "afw_sim_render: null argument")) return rc;
  try {
    afw::RenderResult rr = afw::render(sim->state, sim->cfg.render);
    if (rgb) std::memcpy(rgb, rr.rgb.v.data(), rr.rgb.v.size());
    if (mask) std::memcpy(mask, rr.mask.v.data(), rr.mask.v.size());
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_sim_pull(afw_sim* sim, double x, double y, double theta, double d, int* missed) {
  if (int rc = require(sim != nullptr, "afw_sim_pull: null argument")) return rc;
  try {
    afw::PullAction a;
    a.x = x;
    a.y = y;
    a.theta = theta;
    a.d = d;
    afw::PullOutcome out = afw::apply_pull(sim->state, a, sim->cfg.render, sim->cfg.physics);
    sim->state = std::move(out.state);
    if (missed) *missed = out.missed ? 1 : 0;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

int afw_sim_metrics(afw_sim* sim, double* coverage, double* iou) {
  if (int rc = require(sim && coverage && iou, "afw_sim_metrics: null argument")) return rc;
  try {
    afw::RenderResult rr = afw::render(sim->state, sim->cfg.render);
    const afw::MaskPlane* target =
        sim->task == afw::TaskKind::Alignment ? &sim->flat : nullptr;
    afw::MetricPair m = afw::metrics(rr.mask, sim->flat, target);
    *coverage = m.coverage;
    *iou = m.iou;
    return AFW_OK;
  } catch (...) {
    return capture_error();
  }
}

void afw_sim_free(afw_sim* sim) { delete sim; }

}  // extern "C"
