#include "core/evalharness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/imageio.hpp"

using nlohmann::json;

namespace afw {

namespace {

PullAction random_pull(Rng& rng, const MaskPlane& mask, const DistanceLaw& law) {
  std::vector<int> pixels;
  for (size_t i = 0; i < mask.v.size(); ++i) {
    if (mask.v[i]) pixels.push_back(int(i));
  }
  if (pixels.empty()) throw NoActionError("no garment pixel to pull");
  int p = pixels[rng.uniform_index(pixels.size())];
  PullAction a;
  a.x = double(p % mask.cols);
  a.y = double(p / mask.cols);
  a.theta = rng.uniform(-M_PI, M_PI);
  a.d = rng.uniform(law.min_px(), law.max_px());
  return a;
}

constexpr uint64_t kRandomPolicyStream = 0xBA5E;

}  // namespace

PullAction baseline_random(const MaskPlane& mask, uint64_t seed, const DistanceLaw& law) {
  Rng rng(seed, kRandomPolicyStream);
  return random_pull(rng, mask, law);
}

PullAction baseline_radial(const MaskPlane& mask, const DistanceLaw& law) {
  double cx = 0, cy = 0;
  size_t n = 0;
  for (int y = 0; y < mask.rows; ++y) {
    for (int x = 0; x < mask.cols; ++x) {
      if (!mask.at(y, x)) continue;
      cx += x + 0.5;
      cy += y + 0.5;
      ++n;
    }
  }
  if (n == 0) throw NoActionError("no garment pixel to pull");
  cx /= double(n);
  cy /= double(n);

  auto off_mask = [&](int y, int x) {
    return y < 0 || y >= mask.rows || x < 0 || x >= mask.cols || !mask.at(y, x);
  };
  int bx = -1, by = -1;
  double best = -1.0;
  for (int y = 0; y < mask.rows; ++y) {
    for (int x = 0; x < mask.cols; ++x) {
      if (!mask.at(y, x)) continue;
      bool boundary = off_mask(y - 1, x) || off_mask(y + 1, x) || off_mask(y, x - 1) ||
                      off_mask(y, x + 1);
      if (!boundary) continue;
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double d2 = dx * dx + dy * dy;
      if (d2 > best) {
        best = d2;
        bx = x;
        by = y;
      }
    }
  }
  if (best <= 1e-18) throw NoActionError("mask centroid coincides with its boundary");
  PullAction a;
  a.x = bx;
  a.y = by;
  a.theta = std::atan2(by + 0.5 - cy, bx + 0.5 - cx);
  a.d = law.max_px() / 2.0;
  return a;
}

PolicyFactory random_policy_factory(const DistanceLaw& law) {
  return [law](uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed, kRandomPolicyStream);
    return Policy{"random", [rng, law](const ImageRGB&, const MaskPlane& mask) {
                    return random_pull(*rng, mask, law);
                  }};
  };
}

PolicyFactory radial_policy_factory(const DistanceLaw& law) {
  return [law](uint64_t) {
    return Policy{"radial", [law](const ImageRGB&, const MaskPlane& mask) {
                    return baseline_radial(mask, law);
                  }};
  };
}

PolicyFactory model_policy_factory(std::shared_ptr<ModelNet> net, const DistanceLaw& law) {
  return [net, law](uint64_t) {
    return Policy{"model", [net, law](const ImageRGB& rgb, const MaskPlane& mask) {
                    ActionMaps maps = net->forward(rgb);
                    return select_action(maps, mask, law);
                  }};
  };
}

RolloutRecord rollout(const Policy& policy, const FabricState& initial_state, TaskKind task,
                      const RolloutSetup& setup, uint64_t seed) {
  if (setup.max_steps < 1) throw ConfigError("rollout max_steps must be >= 1");
  if (!(setup.stability_eps > 0)) throw ConfigError("rollout stability_eps must be positive");
  const MaskPlane* target =
      task == TaskKind::Alignment && !setup.target_mask.v.empty() ? &setup.target_mask : nullptr;
  if (task == TaskKind::Alignment && target == nullptr) {
    throw ConfigError("alignment rollout requires a target mask");
  }

  RolloutRecord rec;
  rec.policy_name = policy.name;
  rec.seed = seed;

  FabricState state = initial_state;
  RenderResult rr = render(state, setup.render);
  MetricPair m = metrics(rr.mask, setup.flat_mask, target);
  rec.initial_coverage = m.coverage;
  rec.initial_iou = m.iou;

  double prev_coverage = m.coverage;
  int stable_run = 0;
  rec.termination_reason = "max_steps";
  for (int step = 0; step < setup.max_steps; ++step) {
    if (step > 0) rr = render(state, setup.render);
    PullAction action;
    uint64_t fp0 = net_forward_passes();
    auto t0 = std::chrono::steady_clock::now();
    try {
      action = policy.decide(rr.rgb, rr.mask);
    } catch (const NoActionError&) {
      rec.termination_reason = "no_action";
      break;
    }
    auto t1 = std::chrono::steady_clock::now();

    PullOutcome out = apply_pull(state, action, setup.render, setup.physics);
    state = std::move(out.state);
    RenderResult after = render(state, setup.render);
    m = metrics(after.mask, setup.flat_mask, target);

    StepRecord sr;
    sr.action = action;
    sr.coverage = m.coverage;
    sr.iou = m.iou;
    sr.decision_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    sr.forward_passes = net_forward_passes() - fp0;
    rec.steps.push_back(sr);

    if (std::abs(m.coverage - prev_coverage) < setup.stability_eps) {
      stable_run += 1;
    } else {
      stable_run = 0;
    }
    prev_coverage = m.coverage;
    if (stable_run >= setup.stability_window) {
      rec.termination_reason = "stable";
      break;
    }
  }
  return rec;
}

double coverage_at(const RolloutRecord& r, int k) {
  if (k <= 0 || r.steps.empty()) return r.initial_coverage;
  size_t i = std::min(size_t(k), r.steps.size()) - 1;
  return r.steps[i].coverage;
}

double iou_at(const RolloutRecord& r, int k) {
  if (k <= 0 || r.steps.empty()) return r.initial_iou;
  size_t i = std::min(size_t(k), r.steps.size()) - 1;
  return r.steps[i].iou;
}

SuiteSummary evaluate_suite(const PolicyFactory& factory, TaskKind task,
                            const WorkbenchConfig& cfg) {
  cfg.eval.validate();
  CrumpleLevel level = crumple_level_from_string(cfg.eval.level);
  MaskPlane flat = make_target_mask(cfg.scene.shape_kind(), cfg.scene, cfg.render);

  RolloutSetup setup;
  setup.render = cfg.render;
  setup.physics = cfg.physics;
  setup.law = cfg.distance_law;
  setup.flat_mask = flat;
  if (task == TaskKind::Alignment) setup.target_mask = flat;
  setup.max_steps = cfg.eval.steps_for(task);
  setup.stability_eps = cfg.eval.stability_eps;
  setup.stability_window = cfg.eval.stability_window;

  SuiteSummary s;
  s.task = to_string(task);
  s.n_scenes = cfg.eval.n_scenes;
  for (int i = 0; i < cfg.eval.n_scenes; ++i) {
    uint64_t seed = cfg.eval.seed_base + uint64_t(i);
    FabricState init =
        make_initial_state(task, cfg.scene, level, seed, cfg.render, cfg.physics);
    Policy policy = factory(seed);
    if (s.policy.empty()) s.policy = policy.name;
    RolloutRecord rec = rollout(policy, init, task, setup, seed);
    s.mean_initial_coverage += rec.initial_coverage;
    s.mean_step3_coverage += coverage_at(rec, 3);
    s.mean_final_coverage += coverage_at(rec, setup.max_steps);
    s.mean_step10_iou += iou_at(rec, 10);
    s.mean_step36_iou += iou_at(rec, 36);
    s.mean_final_iou += iou_at(rec, setup.max_steps);
    s.mean_steps += double(rec.steps.size());
    s.records.push_back(std::move(rec));
  }
  double inv = 1.0 / double(cfg.eval.n_scenes);
  s.mean_initial_coverage *= inv;
  s.mean_step3_coverage *= inv;
  s.mean_final_coverage *= inv;
  s.mean_step10_iou *= inv;
  s.mean_step36_iou *= inv;
  s.mean_final_iou *= inv;
  s.mean_steps *= inv;
  return s;
}

std::string summary_table(const SuiteSummary& s) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "policy=%s task=%s scenes=%d\n", s.policy.c_str(),
                s.task.c_str(), s.n_scenes);
  out += buf;
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%-18s %.6f\n", name, v);
    out += buf;
  };
  row("initial_coverage", s.mean_initial_coverage);
  row("step3_coverage", s.mean_step3_coverage);
  row("final_coverage", s.mean_final_coverage);
  row("step10_iou", s.mean_step10_iou);
  row("step36_iou", s.mean_step36_iou);
  row("final_iou", s.mean_final_iou);
  row("mean_steps", s.mean_steps);
  return out;
}

json summary_json(const SuiteSummary& s) {
  return json{{"policy", s.policy},
              {"task", s.task},
              {"n_scenes", s.n_scenes},
              {"mean_initial_coverage", s.mean_initial_coverage},
              {"mean_step3_coverage", s.mean_step3_coverage},
              {"mean_final_coverage", s.mean_final_coverage},
              {"mean_step10_iou", s.mean_step10_iou},
              {"mean_step36_iou", s.mean_step36_iou},
              {"mean_final_iou", s.mean_final_iou},
              {"mean_steps", s.mean_steps}};
}

json rollout_json(const RolloutRecord& r) {
  json steps = json::array();
  for (const StepRecord& s : r.steps) {
    steps.push_back({{"x", s.action.x},
                     {"y", s.action.y},
                     {"theta", s.action.theta},
                     {"d", s.action.d},
                     {"coverage", s.coverage},
                     {"iou", s.iou},
                     {"decision_latency_ms", s.decision_latency_ms},
                     {"forward_passes", s.forward_passes}});
  }
  return json{{"policy", r.policy_name},
              {"seed", r.seed},
              {"initial_coverage", r.initial_coverage},
              {"initial_iou", r.initial_iou},
              {"termination_reason", r.termination_reason},
              {"steps", steps}};
}

namespace {

json dataset_stamp_config(const WorkbenchConfig& cfg, TaskKind task, int episodes,
                          int steps_per_episode, uint64_t seed) {
  return json{{"task", to_string(task)},
              {"episodes", episodes},
              {"steps_per_episode", steps_per_episode},
              {"seed", seed},
              {"render", cfg.render},
              {"scene", cfg.scene},
              {"distance_law", cfg.distance_law},
              {"physics", cfg.physics}};
}

}  // namespace

std::string ensure_dataset(const WorkbenchConfig& cfg, TaskKind task, int episodes,
                           int steps_per_episode, uint64_t seed, const std::string& root) {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (steps_per_episode < 1) throw ConfigError("steps_per_episode must be >= 1");
  json want = dataset_stamp_config(cfg, task, episodes, steps_per_episode, seed);

  std::string stamp_path = root + "/gen.json";
  if (std::filesystem::exists(stamp_path)) {
    try {
      json stamp = json::parse(read_text_file(stamp_path));
      if (stamp.value("config", json()) == want) {
        std::string digest = dataset_digest(root);
        if (digest == stamp.value("digest", std::string())) return digest;
      }
    } catch (const std::exception&) {
      // fall through to regeneration
    }
  }

  std::filesystem::remove_all(root);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < episodes; ++i) {
    CrumpleLevel level = i % 2 == 0 ? CrumpleLevel::Hard : CrumpleLevel::Easy;
    std::vector<TrainingSample> ep =
        sample_episode(task, cfg.scene, level, seed + uint64_t(i), steps_per_episode,
                       int64_t(i), cfg.render, cfg.distance_law, cfg.physics);
    samples.insert(samples.end(), std::make_move_iterator(ep.begin()),
                   std::make_move_iterator(ep.end()));
  }
  write_dataset(samples, root, task, cfg.render, cfg.scene, cfg.distance_law);
  std::string digest = dataset_digest(root);
  json stamp = {{"config", want}, {"digest", digest}};
  write_text_file(stamp_path, stamp.dump(2) + "\n");
  return digest;
}

std::string ensure_trained_model(const WorkbenchConfig& cfg, TaskKind task,
                                 const std::string& dataset_root,
                                 const std::string& cache_dir) {
  std::string digest = dataset_digest(dataset_root);
  TrainConfig tc = cfg.train;
  tc.task = to_string(task);
  tc.validate();
  json key = {{"model", cfg.model},
              {"train", tc},
              {"refine", cfg.refine},
              {"distance_law", cfg.distance_law},
              {"dataset", digest}};
  std::string id = sha256_hex(key.dump()).substr(0, 16);
  std::filesystem::create_directories(cache_dir);
  std::string ckpt = cache_dir + "/model_" + id + ".ckpt";
  if (std::filesystem::exists(ckpt)) return ckpt;

  std::vector<TrainingSample> refined;
  {
    std::vector<TrainingSample> raw = read_dataset(dataset_root);
    refined = refine(raw, cfg.refine);
  }

  ModelNet net(cfg.model);
  AdamState adam;
  TrainProgress start;
  std::string workdir = cache_dir + "/work_" + id;
  std::string partial = workdir + "/checkpoint.bin";
  if (std::filesystem::exists(partial)) {
    LoadedCheckpoint ck = load_checkpoint(partial);
    if (ck.model == cfg.model && ck.params.size() == size_t(net.param_count())) {
      apply_params(net, ck.params);
      adam = std::move(ck.adam);
      start = ck.progress;
    }
  }
  TrainResult result = train(net, refined, tc, cfg.distance_law, workdir, &adam, start);
  save_checkpoint(ckpt, net, tc, cfg.distance_law, adam, result.progress);
  return ckpt;
}

std::vector<AblationVariant> score_ablation_variants() {
  return {{"(a)", false, false, false}, {"(b)", true, false, false},
          {"(c)", false, true, false},  {"(d)", false, false, true},
          {"(e)", true, true, false},   {"(f)", true, false, true},
          {"(g)", false, true, true},   {"(h)", true, true, true}};
}

WorkbenchConfig apply_variant(const WorkbenchConfig& base, const AblationVariant& v) {
  WorkbenchConfig cfg = base;
  cfg.model.use_se = v.se_block;
  if (!v.action_enlarging) cfg.train.enlarge_radius = 0;
  if (!v.background_info) {
    cfg.loss_weights.lambda_b = 0.0;
    cfg.train.loss_weights.lambda_b = 0.0;
  }
  return cfg;
}

namespace {

std::shared_ptr<ModelNet> model_from_checkpoint(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  auto net = std::make_shared<ModelNet>(ck.model);
  apply_params(*net, ck.params);
  return net;
}

}  // namespace

std::vector<AblationRow> run_ablation(const WorkbenchConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::string& dataset_root,
                                      const std::string& cache_dir) {
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    WorkbenchConfig cfg = apply_variant(base, v);
    std::string ckpt = ensure_trained_model(cfg, TaskKind::Smoothing, dataset_root, cache_dir);
    auto net = model_from_checkpoint(ckpt);
    SuiteSummary s = evaluate_suite(model_policy_factory(net, cfg.distance_law),
                                    TaskKind::Smoothing, cfg);
    rows.push_back({v.key, std::move(s)});
  }
  return rows;
}

std::vector<AblationRow> run_shape_sweep(const WorkbenchConfig& base,
                                         const std::vector<double>& weights,
                                         const std::string& dataset_root,
                                         const std::string& cache_dir) {
  std::vector<AblationRow> rows;
  for (double w : weights) {
    WorkbenchConfig cfg = base;
    cfg.loss_weights.lambda_s = w;
    cfg.train.loss_weights.lambda_s = w;
    std::string ckpt = ensure_trained_model(cfg, TaskKind::Alignment, dataset_root, cache_dir);
    auto net = model_from_checkpoint(ckpt);
    SuiteSummary s = evaluate_suite(model_policy_factory(net, cfg.distance_law),
                                    TaskKind::Alignment, cfg);
    char key[64];
    std::snprintf(key, sizeof(key), "lambda_s=%g", w);
    rows.push_back({key, std::move(s)});
  }
  return rows;
}

namespace {

void draw_line(ImageRGB& img, double x0, double y0, double x1, double y1,
               const std::array<uint8_t, 3>& color) {
  double dx = x1 - x0, dy = y1 - y0;
  int n = int(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1;
  for (int i = 0; i <= n; ++i) {
    double t = double(i) / double(n);
    int x = int(std::lround(x0 + t * dx));
    int y = int(std::lround(y0 + t * dy));
    for (int oy = 0; oy <= 1; ++oy) {
      for (int ox = 0; ox <= 1; ++ox) {
        int yy = y + oy, xx = x + ox;
        if (yy < 0 || yy >= img.rows || xx < 0 || xx >= img.cols) continue;
        uint8_t* p = img.px(yy, xx);
        p[0] = color[0];
        p[1] = color[1];
        p[2] = color[2];
      }
    }
  }
}

}  // namespace

void write_curve_plot(const std::string& ppm_path, const std::string& csv_path,
                      const std::vector<std::vector<double>>& series,
                      const std::vector<std::string>& labels) {
  if (series.empty()) throw ContractError("curve plot needs at least one series");
  if (labels.size() != series.size()) {
    throw ContractError("curve plot labels must match the series");
  }
  size_t max_len = 0;
  double vmax = 1.0;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.size());
    for (double v : s) vmax = std::max(vmax, v);
  }
  if (max_len < 2) throw ContractError("curve plot series need at least two points");

  const int W = 480, H = 320, ml = 50, mr = 15, mt = 15, mb = 35;
  ImageRGB img;
  img.rows = H;
  img.cols = W;
  img.v.assign(size_t(W) * H * 3, 255);
  auto px_x = [&](double step) {
    return ml + step / double(max_len - 1) * (W - ml - mr - 1);
  };
  auto px_y = [&](double v) { return H - mb - v / vmax * (H - mt - mb - 1); };

  const std::array<uint8_t, 3> grid{225, 225, 225}, axis{60, 60, 60};
  for (int i = 0; i <= 4; ++i) {
    double v = vmax * i / 4.0;
    draw_line(img, ml, px_y(v), W - mr - 1, px_y(v), grid);
  }
  for (size_t k = 0; k < max_len; ++k) {
    draw_line(img, px_x(double(k)), H - mb, px_x(double(k)), H - mb + 3, axis);
  }
  draw_line(img, ml, mt, ml, H - mb, axis);
  draw_line(img, ml, H - mb, W - mr - 1, H - mb, axis);

  const std::array<uint8_t, 3> palette[6] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},
                                             {255, 127, 14}, {148, 103, 189}, {23, 190, 207}};
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const auto& color = palette[si % 6];
    for (size_t k = 0; k + 1 < s.size(); ++k) {
      draw_line(img, px_x(double(k)), px_y(s[k]), px_x(double(k + 1)), px_y(s[k + 1]), color);
    }
  }
  write_ppm(ppm_path, img);

  std::string csv = "step";
  for (const std::string& l : labels) csv += "," + l;
  csv += "\n";
  char buf[64];
  for (size_t k = 0; k < max_len; ++k) {
    csv += std::to_string(k);
    for (const auto& s : series) {
      if (k < s.size()) {
        std::snprintf(buf, sizeof(buf), ",%.6f", s[k]);
        csv += buf;
      } else {
        csv += ",";
      }
    }
    csv += "\n";
  }
  write_text_file(csv_path, csv);
}

void plot_run_dir(const std::string& run_dir) {
  std::string rec_dir = run_dir + "/records";
  if (!std::filesystem::is_directory(rec_dir)) {
    throw DataError("run directory " + run_dir + " has no records/");
  }
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(rec_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("run directory " + run_dir + " has no rollout records");

  std::vector<std::vector<double>> cov, iou;
  std::vector<std::string> labels;
  for (const std::string& f : files) {
    json r;
    try {
      r = json::parse(read_text_file(f));
    } catch (const json::exception& e) {
      throw DataError("rollout record " + f + ": " + e.what());
    }
    std::vector<double> c{r.value("initial_coverage", 0.0)};
    std::vector<double> u{r.value("initial_iou", 0.0)};
    for (const json& s : r.value("steps", json::array())) {
      c.push_back(s.value("coverage", 0.0));
      u.push_back(s.value("iou", 0.0));
    }
    cov.push_back(std::move(c));
    iou.push_back(std::move(u));
    labels.push_back("seed" + std::to_string(r.value("seed", uint64_t(0))));
  }
  std::string plots = run_dir + "/plots";
  std::filesystem::create_directories(plots);
  write_curve_plot(plots + "/coverage.ppm", plots + "/coverage.csv", cov, labels);
  write_curve_plot(plots + "/iou.ppm", plots + "/iou.csv", iou, labels);
}

}  // namespace afw
