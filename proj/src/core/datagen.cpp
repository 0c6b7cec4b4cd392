#include "core/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "core/imageio.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace afw {

const char* kDatasetSchemaVersion = "afw-1";

void SceneConfig::validate() const {
  shape_kind_from_string(shape);
  if (grid_rows < 8 || grid_cols < 8) throw ConfigError("scene grid must be at least 8x8");
  if (!(rest_spacing > 0)) throw ConfigError("rest_spacing must be positive");
}

TaskKind task_from_string(const std::string& name) {
  if (name == "smoothing") return TaskKind::Smoothing;
  if (name == "alignment") return TaskKind::Alignment;
  throw ConfigError("unknown task: " + name);
}

const char* to_string(TaskKind task) {
  return task == TaskKind::Smoothing ? "smoothing" : "alignment";
}

void RefinePolicy::validate() const {
  if (n_bins < 1) throw ConfigError("refine needs at least one bin");
}

bool TrainingSample::operator==(const TrainingSample& o) const {
  return rgb.rows == o.rgb.rows && rgb.cols == o.rgb.cols && rgb.v == o.rgb.v &&
         current_mask == o.current_mask && target_mask == o.target_mask &&
         action.x == o.action.x && action.y == o.action.y && action.theta == o.action.theta &&
         action.d == o.action.d && action_px_x == o.action_px_x && action_px_y == o.action_px_y &&
         gt_s == o.gt_s && gt_sin == o.gt_sin && gt_cos == o.gt_cos && gt_d == o.gt_d &&
         episode_id == o.episode_id && step_id == o.step_id && seed == o.seed &&
         shape == o.shape && level == o.level;
}

FabricState make_initial_state(TaskKind task, const SceneConfig& scene, CrumpleLevel level,
                               uint64_t seed, const RenderConfig& cfg,
                               const PhysicsParams& phys) {
  scene.validate();
  cfg.validate();
  FabricState flat = make_flat_state(scene.shape_kind(), scene.grid_rows, scene.grid_cols,
                                     scene.rest_spacing, seed);
  FabricState s = crumple(flat, level, seed, phys);
  if (task == TaskKind::Alignment) {
    // Alignment scenes start displaced from the canonical pose so there is
    // something to align; the offset is part of the episode seed's identity.
    Rng rng(seed, 0xA119);
    Vec2 off{rng.uniform(-0.12, 0.12) * cfg.world_window,
             rng.uniform(-0.12, 0.12) * cfg.world_window};
    for (size_t i = 0; i < s.active.size(); ++i) {
      if (s.active[i]) s.pos[i] += off;
    }
  }
  return s;
}

MaskPlane make_target_mask(ShapeKind kind, const SceneConfig& scene, const RenderConfig& cfg) {
  FabricState flat =
      make_flat_state(kind, scene.grid_rows, scene.grid_cols, scene.rest_spacing, 0);
  return render(flat, cfg).mask;
}

std::vector<TrainingSample> sample_episode(TaskKind task, const SceneConfig& scene,
                                           CrumpleLevel level, uint64_t seed,
                                           int steps_per_episode, int64_t episode_id,
                                           const RenderConfig& cfg, const DistanceLaw& law,
                                           const PhysicsParams& phys) {
  if (steps_per_episode < 1) throw ConfigError("steps_per_episode must be >= 1");
  law.validate();
  MaskPlane flat_mask = make_target_mask(scene.shape_kind(), scene, cfg);
  MaskPlane target = flat_mask;
  FabricState state = make_initial_state(task, scene, level, seed, cfg, phys);
  Rng rng(seed, 0xDA7A);

  std::vector<TrainingSample> out;
  RenderResult r = render(state, cfg);
  MetricPair pre = metrics(r.mask, flat_mask, &target);
  for (int step = 0; step < steps_per_episode; ++step) {
    std::vector<int> garment_px;
    for (size_t i = 0; i < r.mask.v.size(); ++i) {
      if (r.mask.v[i]) garment_px.push_back(int(i));
    }
    if (garment_px.empty()) break;

    bool landed = false;
    PullAction action;
    PullOutcome outcome;
    int px = 0, py = 0;
    for (int attempt = 0; attempt < 10 && !landed; ++attempt) {
      int pick = garment_px[rng.uniform_index(garment_px.size())];
      px = pick % cfg.width;
      py = pick / cfg.width;
      action = {double(px), double(py), rng.uniform(-M_PI, M_PI),
                rng.uniform(law.min_px(), law.max_px())};
      outcome = apply_pull(state, action, cfg, phys);
      landed = !outcome.missed;
    }
    if (!landed) continue;  // state unchanged, no sample for this step

    RenderResult post_r = render(outcome.state, cfg);
    MetricPair post = metrics(post_r.mask, flat_mask, &target);
    TrainingSample s;
    s.rgb = r.rgb;
    s.current_mask = r.mask;
    if (task == TaskKind::Alignment) s.target_mask = target;
    s.action = action;
    s.action_px_x = px;
    s.action_px_y = py;
    s.gt_s = task == TaskKind::Smoothing ? post.coverage - pre.coverage : post.iou - pre.iou;
    s.gt_sin = std::sin(action.theta);
    s.gt_cos = std::cos(action.theta);
    s.gt_d = action.d / law.d_b;
    s.episode_id = episode_id;
    s.step_id = step;
    s.seed = seed;
    s.shape = scene.shape;
    s.level = to_string(level);
    out.push_back(std::move(s));

    state = outcome.state;
    r = post_r;
    pre = post;
  }
  return out;
}

std::vector<TrainingSample> refine(const std::vector<TrainingSample>& samples,
                                   const RefinePolicy& policy) {
  policy.validate();
  if (samples.empty()) throw DataError("refine called on an empty sample list");
  std::vector<size_t> kept;
  double max_score = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].gt_s < policy.discard_below) continue;
    kept.push_back(i);
    max_score = std::max(max_score, samples[i].gt_s);
  }
  if (kept.empty()) throw DataError("refine discarded every sample (all scores negative)");

  int nb = policy.n_bins;
  std::vector<std::vector<size_t>> bins(nb);
  for (size_t i : kept) {
    int b = max_score > 0.0
                ? std::min(nb - 1, int(std::floor(samples[i].gt_s / max_score * nb)))
                : 0;
    bins[b].push_back(i);
  }
  std::vector<size_t> nonempty_counts;
  for (const auto& b : bins) {
    if (!b.empty()) nonempty_counts.push_back(b.size());
  }
  std::sort(nonempty_counts.begin(), nonempty_counts.end());
  // Median of the nonempty bin counts; an even-sized list averages the two
  // middle counts (truncated to an integer cap).
  size_t mid = nonempty_counts.size() / 2;
  size_t cap = nonempty_counts.size() % 2 == 1
                   ? nonempty_counts[mid]
                   : (nonempty_counts[mid - 1] + nonempty_counts[mid]) / 2;

  std::vector<size_t> selected;
  for (int b = 0; b < nb; ++b) {
    std::vector<size_t>& bin = bins[b];
    if (bin.size() <= cap) {
      selected.insert(selected.end(), bin.begin(), bin.end());
      continue;
    }
    // Seeded Fisher-Yates, take the first cap picks, restore input order.
    Rng rng(policy.subsample_seed, 0xB000 + uint64_t(b));
    for (size_t i = 0; i + 1 < bin.size(); ++i) {
      size_t j = i + size_t(rng.uniform_index(bin.size() - i));
      std::swap(bin[i], bin[j]);
    }
    selected.insert(selected.end(), bin.begin(), bin.begin() + cap);
  }
  std::sort(selected.begin(), selected.end());
  std::vector<TrainingSample> out;
  out.reserve(selected.size());
  for (size_t i : selected) out.push_back(samples[i]);
  return out;
}

SupervisionBundle make_supervision(const TrainingSample& sample, int enlarge_radius,
                                   bool need_target) {
  SupervisionBundle b;
  b.m_action = MaskPlane(sample.current_mask.rows, sample.current_mask.cols, 0);
  if (!b.m_action.in_bounds(sample.action_px_y, sample.action_px_x)) {
    throw DataError("stored action pixel outside the image");
  }
  b.m_action.at(sample.action_px_y, sample.action_px_x) = 1;
  b.m_eaction = enlarge_action_mask(b.m_action, sample.current_mask, enlarge_radius);
  b.m_background = MaskPlane(sample.current_mask.rows, sample.current_mask.cols, 0);
  for (size_t i = 0; i < sample.current_mask.v.size(); ++i) {
    b.m_background.v[i] = sample.current_mask.v[i] ? 0 : 1;
  }
  b.gt_s = sample.gt_s;
  b.gt_b = -1.0;
  b.gt_sin = sample.gt_sin;
  b.gt_cos = sample.gt_cos;
  b.gt_d = sample.gt_d;
  b.current_mask = to_real(sample.current_mask);
  if (need_target) {
    if (sample.target_mask.empty()) {
      throw DataError("sample has no target mask but the task needs one");
    }
    b.target_mask = to_real(sample.target_mask);
  }
  return b;
}

namespace {

std::string sample_stem(const TrainingSample& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ep%06lld_s%02d", (long long)s.episode_id, s.step_id);
  return buf;
}

}  // namespace

void write_dataset(const std::vector<TrainingSample>& samples, const std::string& root,
                   TaskKind task, const RenderConfig& cfg, const SceneConfig& scene,
                   const DistanceLaw& law) {
  if (samples.empty()) throw DataError("refusing to write an empty dataset");
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");

  json meta;
  meta["schema_version"] = kDatasetSchemaVersion;
  meta["task"] = to_string(task);
  meta["count"] = samples.size();
  meta["render"] = {{"height", cfg.height},
                    {"width", cfg.width},
                    {"world_window", cfg.world_window},
                    {"garment_color", cfg.garment_color},
                    {"background_color", cfg.background_color}};
  meta["scene"] = {{"shape", scene.shape},
                   {"grid_rows", scene.grid_rows},
                   {"grid_cols", scene.grid_cols},
                   {"rest_spacing", scene.rest_spacing}};
  meta["distance_law"] = {{"d_b", law.d_b}, {"d_scale", law.d_scale}, {"d_offset", law.d_offset}};
  write_text_file((fs::path(root) / "meta.json").string(), meta.dump(2) + "\n");

  std::map<std::string, bool> target_written;
  std::set<std::string> stems;
  std::string index;
  for (const TrainingSample& s : samples) {
    std::string stem = sample_stem(s);
    if (!stems.insert(stem).second) {
      throw DataError("duplicate sample id " + stem + "; episode ids must be unique");
    }
    std::string rgb_rel = "images/" + stem + ".ppm";
    std::string cur_rel = "masks/" + stem + "_cur.pgm";
    write_ppm((fs::path(root) / rgb_rel).string(), s.rgb);
    write_pgm_mask((fs::path(root) / cur_rel).string(), s.current_mask);
    std::string target_rel;
    if (!s.target_mask.empty()) {
      target_rel = "masks/target_" + s.shape + ".pgm";
      if (!target_written[s.shape]) {
        write_pgm_mask((fs::path(root) / target_rel).string(), s.target_mask);
        target_written[s.shape] = true;
      }
    }
    json row;
    row["episode_id"] = s.episode_id;
    row["step_id"] = s.step_id;
    row["seed"] = s.seed;
    row["shape"] = s.shape;
    row["level"] = s.level;
    row["action"] = {{"x", s.action.x}, {"y", s.action.y}, {"theta", s.action.theta},
                     {"d", s.action.d}};
    row["ax"] = s.action_px_x;
    row["ay"] = s.action_px_y;
    row["gt_s"] = s.gt_s;
    row["gt_sin"] = s.gt_sin;
    row["gt_cos"] = s.gt_cos;
    row["gt_d"] = s.gt_d;
    row["rgb"] = rgb_rel;
    row["cur"] = cur_rel;
    row["target"] = target_rel;
    index += row.dump() + "\n";
  }
  write_text_file((fs::path(root) / "index.jsonl").string(), index);
}

std::vector<TrainingSample> read_dataset(const std::string& root) {
  fs::path rp(root);
  if (!fs::exists(rp / "meta.json")) {
    throw DataError("no dataset at " + root + " (meta.json missing)");
  }
  json meta = json::parse(read_text_file((rp / "meta.json").string()));
  std::string ver = meta.value("schema_version", "");
  if (ver != kDatasetSchemaVersion) {
    throw DataError("dataset schema '" + ver + "' is incompatible with reader schema '" +
                    kDatasetSchemaVersion + "'");
  }
  std::string index = read_text_file((rp / "index.jsonl").string());
  std::vector<TrainingSample> out;
  std::map<std::string, MaskPlane> target_cache;
  size_t pos = 0;
  int line_no = 0;
  while (pos < index.size()) {
    size_t eol = index.find('\n', pos);
    if (eol == std::string::npos) eol = index.size();
    std::string line = index.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("index.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      TrainingSample s;
      s.episode_id = row.at("episode_id").get<int64_t>();
      s.step_id = row.at("step_id").get<int32_t>();
      s.seed = row.at("seed").get<uint64_t>();
      s.shape = row.at("shape").get<std::string>();
      s.level = row.at("level").get<std::string>();
      s.action.x = row.at("action").at("x").get<double>();
      s.action.y = row.at("action").at("y").get<double>();
      s.action.theta = row.at("action").at("theta").get<double>();
      s.action.d = row.at("action").at("d").get<double>();
      s.action_px_x = row.at("ax").get<int>();
      s.action_px_y = row.at("ay").get<int>();
      s.gt_s = row.at("gt_s").get<double>();
      s.gt_sin = row.at("gt_sin").get<double>();
      s.gt_cos = row.at("gt_cos").get<double>();
      s.gt_d = row.at("gt_d").get<double>();
      s.rgb = read_ppm((rp / row.at("rgb").get<std::string>()).string());
      s.current_mask = read_pgm_mask((rp / row.at("cur").get<std::string>()).string());
      std::string target_rel = row.at("target").get<std::string>();
      if (!target_rel.empty()) {
        auto it = target_cache.find(target_rel);
        if (it == target_cache.end()) {
          it = target_cache.emplace(target_rel, read_pgm_mask((rp / target_rel).string())).first;
        }
        s.target_mask = it->second;
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("index.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string dataset_digest(const std::string& root) {
  std::vector<std::string> rels;
  fs::path rp(root);
  for (auto it = fs::recursive_directory_iterator(rp); it != fs::recursive_directory_iterator();
       ++it) {
    if (!it->is_regular_file()) continue;
    std::string rel = fs::relative(it->path(), rp).generic_string();
    // Sidecar stamps and manifests are written after the digest they record.
    if (rel == "gen.json" || rel == "manifest.json") continue;
    rels.push_back(std::move(rel));
  }
  std::sort(rels.begin(), rels.end());
  std::string acc;
  for (const std::string& rel : rels) {
    acc += rel + ":" + sha256_file_hex((rp / rel).string()) + "\n";
  }
  return sha256_hex(acc);
}

double resimulate_gt(const std::vector<TrainingSample>& episode_rows, size_t row,
                     TaskKind task, const SceneConfig& scene, const RenderConfig& cfg,
                     const DistanceLaw& law, const PhysicsParams& phys) {
  (void)law;
  if (row >= episode_rows.size()) throw ContractError("episode row index out of range");
  const TrainingSample& target_row = episode_rows[row];
  for (const TrainingSample& s : episode_rows) {
    if (s.episode_id != target_row.episode_id || s.seed != target_row.seed) {
      throw ContractError("episode_rows mixes episodes");
    }
  }
  CrumpleLevel level = crumple_level_from_string(target_row.level);
  FabricState state = make_initial_state(task, scene, level, target_row.seed, cfg, phys);
  for (size_t i = 0; i < row; ++i) {
    PullOutcome o = apply_pull(state, episode_rows[i].action, cfg, phys);
    if (o.missed) throw DataError("stored action missed on replay");
    state = o.state;
  }
  MaskPlane flat_mask = make_target_mask(scene.shape_kind(), scene, cfg);
  MetricPair pre = metrics(render(state, cfg).mask, flat_mask, &flat_mask);
  PullOutcome o = apply_pull(state, target_row.action, cfg, phys);
  if (o.missed) throw DataError("stored action missed on replay");
  MetricPair post = metrics(render(o.state, cfg).mask, flat_mask, &flat_mask);
  return task == TaskKind::Smoothing ? post.coverage - pre.coverage : post.iou - pre.iou;
}

}  // namespace afw
