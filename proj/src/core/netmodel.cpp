#include "core/netmodel.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/config.hpp"

using nlohmann::json;

namespace afw {

void ModelConfig::validate() const {
  if (input_h < 8 || input_w < 8) throw ConfigError("model input must be at least 8x8");
  if (stem_channels < 1) throw ConfigError("model.stem_channels must be >= 1");
  if (encoder_stages.empty()) throw ConfigError("model.encoder_stages must not be empty");
  for (const StageSpec& st : encoder_stages) {
    if (st.blocks < 1) throw ConfigError("encoder stage blocks must be >= 1");
    if (st.channels < 1) throw ConfigError("encoder stage channels must be >= 1");
    if (st.stride != 1 && st.stride != 2) throw ConfigError("encoder stage stride must be 1 or 2");
  }
  if (score_head_stages < 1) throw ConfigError("model.score_head_stages must be >= 1");
  if (head_channel_schedule.size() < 2) {
    throw ConfigError("model.head_channel_schedule needs at least 2 entries");
  }
  if (head_channel_schedule.size() < size_t(score_head_stages)) {
    throw ConfigError("model.head_channel_schedule must cover every score head stage");
  }
  for (int ch : head_channel_schedule) {
    if (ch < 1) throw ConfigError("head channel counts must be >= 1");
  }
  for (int ch : decoder_channels) {
    if (ch < 1) throw ConfigError("decoder channel counts must be >= 1");
  }
  if (se_reduction < 1) throw ConfigError("model.se_reduction must be >= 1");
  int df = downsample_factor();
  if ((1 << decoder_channels.size()) != df) {
    throw ConfigError("decoder_channels must undo the encoder downsampling exactly");
  }
  if (input_h % df != 0 || input_w % df != 0) {
    throw ConfigError("model input size must be divisible by the downsample factor");
  }
}

int ModelConfig::downsample_factor() const {
  int df = stem_downsample ? 4 : 1;
  for (const StageSpec& st : encoder_stages) df *= st.stride;
  return df;
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return input_h == o.input_h && input_w == o.input_w &&
         stem_downsample == o.stem_downsample && stem_channels == o.stem_channels &&
         encoder_stages == o.encoder_stages && decoder_channels == o.decoder_channels &&
         score_head_stages == o.score_head_stages &&
         head_channel_schedule == o.head_channel_schedule &&
         se_reduction == o.se_reduction && use_se == o.use_se && seed == o.seed;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be positive and finite");
  }
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (optimizer_kind != "adam") {
    throw ConfigError("unsupported optimizer '" + optimizer_kind + "'");
  }
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  task_from_string(task);
  loss_weights.validate();
  if (enlarge_radius < 0) throw ConfigError("train.enlarge_radius must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

namespace {
std::atomic<uint64_t> g_forward_passes{0};
}

uint64_t net_forward_passes() { return g_forward_passes.load(std::memory_order_relaxed); }
void bump_net_forward_passes() { g_forward_passes.fetch_add(1, std::memory_order_relaxed); }

std::vector<float> extract_params(ModelNet& net) {
  std::vector<float> flat;
  flat.reserve(size_t(net.param_count()));
  for (const auto& p : net.params()) flat.insert(flat.end(), p.value, p.value + p.n);
  return flat;
}

void apply_params(ModelNet& net, const std::vector<float>& flat) {
  if (flat.size() != size_t(net.param_count())) {
    throw ContractError("parameter vector size does not match the model");
  }
  size_t off = 0;
  for (auto& p : net.params()) {
    std::memcpy(p.value, flat.data() + off, size_t(p.n) * sizeof(float));
    off += size_t(p.n);
  }
}

namespace {

constexpr char kCkptMagic[] = "AFWCKPT1\n";
constexpr size_t kCkptMagicLen = sizeof(kCkptMagic) - 1;

void write_f32(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(float)));
}

std::vector<float> read_f32(std::ifstream& in, size_t n, const std::string& path) {
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
  if (size_t(in.gcount()) != n * sizeof(float)) {
    throw DataError("checkpoint " + path + " is truncated");
  }
  return v;
}

void adam_step(ModelNet& net, AdamState& adam, double lr, double weight_decay) {
  adam.t += 1;
  const double b1c = 1.0 - std::pow(0.9, double(adam.t));
  const double b2c = 1.0 - std::pow(0.999, double(adam.t));
  size_t off = 0;
  for (auto& p : net.params()) {
    for (long i = 0; i < p.n; ++i) {
      const double g = double(p.grad[i]);
      const double m = 0.9 * double(adam.m[off + size_t(i)]) + 0.1 * g;
      const double v = 0.999 * double(adam.v[off + size_t(i)]) + 0.001 * g * g;
      adam.m[off + size_t(i)] = float(m);
      adam.v[off + size_t(i)] = float(v);
      const double upd = (m / b1c) / (std::sqrt(v / b2c) + 1e-8) +
                         weight_decay * double(p.value[i]);
      p.value[i] = float(double(p.value[i]) - lr * upd);
    }
    off += size_t(p.n);
  }
}

void check_finite(const LossBreakdown& bd, uint64_t step) {
  struct Term {
    const char* name;
    double value;
  };
  const Term terms[] = {{"score", bd.score},
                        {"angle", bd.angle},
                        {"distance", bd.distance},
                        {"shape", bd.shape},
                        {"total", bd.total}};
  for (const Term& t : terms) {
    if (!std::isfinite(t.value)) {
      throw TrainError("non-finite " + std::string(t.name) + " loss at step " +
                       std::to_string(step));
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, ModelNet& net, const TrainConfig& train_cfg,
                     const DistanceLaw& law, const AdamState& adam,
                     const TrainProgress& progress) {
  std::vector<float> params = extract_params(net);
  if (adam.m.size() != params.size() || adam.v.size() != params.size()) {
    throw ContractError("optimizer state size does not match the model");
  }
  json header;
  header["model"] = net.config();
  header["train"] = train_cfg;
  header["distance_law"] = law;
  header["progress"] = {{"step", progress.step}, {"epoch", progress.epoch},
                        {"cursor", progress.cursor}};
  header["adam_t"] = adam.t;
  header["n_params"] = params.size();
  std::string hs = header.dump();

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kCkptMagic, std::streamsize(kCkptMagicLen));
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));  // little-endian host
  out.write(hs.data(), std::streamsize(hs.size()));
  write_f32(out, params);
  write_f32(out, adam.m);
  write_f32(out, adam.v);
  if (!out) throw DataError("short write on checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[kCkptMagicLen];
  in.read(magic, std::streamsize(kCkptMagicLen));
  if (size_t(in.gcount()) != kCkptMagicLen ||
      std::memcmp(magic, kCkptMagic, kCkptMagicLen) != 0) {
    throw DataError("checkpoint " + path + " has an unrecognized header");
  }
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (in.gcount() != sizeof(hlen) || hlen > (1u << 20)) {
    throw DataError("checkpoint " + path + " has an unrecognized header");
  }
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  if (size_t(in.gcount()) != hlen) throw DataError("checkpoint " + path + " is truncated");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  LoadedCheckpoint ck;
  from_json(header.at("model"), ck.model);
  from_json(header.at("train"), ck.train);
  if (header.contains("distance_law")) from_json(header.at("distance_law"), ck.law);
  ck.progress.step = header.at("progress").value("step", uint64_t(0));
  ck.progress.epoch = header.at("progress").value("epoch", uint64_t(0));
  ck.progress.cursor = header.at("progress").value("cursor", uint64_t(0));
  ck.adam.t = header.value("adam_t", uint64_t(0));
  size_t n = header.at("n_params").get<size_t>();
  ck.params = read_f32(in, n, path);
  ck.adam.m = read_f32(in, n, path);
  ck.adam.v = read_f32(in, n, path);
  return ck;
}

TrainResult train(ModelNet& net, const std::vector<TrainingSample>& data,
                  const TrainConfig& cfg, const DistanceLaw& law,
                  const std::string& checkpoint_dir, AdamState* adam_io,
                  TrainProgress start) {
  cfg.validate();
  law.validate();
  const size_t n = data.size();
  const size_t batch = size_t(cfg.batch_size);
  if (n < batch) throw ConfigError("training set is smaller than one batch");
  const size_t steps_per_epoch = n / batch;  // trailing partial batch is dropped

  const size_t n_params = size_t(net.param_count());
  AdamState local;
  AdamState& adam = adam_io ? *adam_io : local;
  if (adam.m.empty() && adam.v.empty()) {
    adam.m.assign(n_params, 0.0f);
    adam.v.assign(n_params, 0.0f);
  } else if (adam.m.size() != n_params || adam.v.size() != n_params) {
    throw ContractError("optimizer state size does not match the model");
  }

  const TaskKind task = cfg.task_kind();
  LossWeights weights = cfg.loss_weights;
  if (task == TaskKind::Smoothing) weights.lambda_s = 0.0;  // no target mask to warp toward
  const bool need_target = weights.lambda_s != 0.0;
  const double inv_b = 1.0 / double(batch);

  std::ofstream log;
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
    auto mode = start.step > 0 ? std::ios::app : std::ios::trunc;
    log.open(checkpoint_dir + "/train_log.jsonl", mode);
    if (!log) throw DataError("cannot write " + checkpoint_dir + "/train_log.jsonl");
  }

  TrainResult result;
  TrainProgress prog = start;

  for (uint64_t epoch = start.epoch; epoch < uint64_t(cfg.epochs); ++epoch) {
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(cfg.seed, epoch);
    for (size_t i = n; i-- > 1;) {
      size_t j = rng.uniform_index(i + 1);
      std::swap(perm[i], perm[j]);
    }

    uint64_t b0 = epoch == start.epoch ? start.cursor : 0;
    for (uint64_t b = b0; b < steps_per_epoch; ++b) {
      net.zero_grads();
      LossBreakdown acc;
      for (size_t i = 0; i < batch; ++i) {
        const TrainingSample& s = data[perm[size_t(b) * batch + i]];
        ActionMaps maps = net.forward(s.rgb);
        SupervisionBundle bundle = make_supervision(s, cfg.enlarge_radius, need_target);
        LossBreakdown bd;
        MapGradients g = total_loss_gradients(maps, bundle, weights, law, &bd);
        check_finite(bd, prog.step + 1);
        for (double& x : g.score.v) x *= inv_b;
        for (double& x : g.sin_theta.v) x *= inv_b;
        for (double& x : g.cos_theta.v) x *= inv_b;
        for (double& x : g.dist_raw.v) x *= inv_b;
        net.backward(g);
        acc.score += bd.score * inv_b;
        acc.angle += bd.angle * inv_b;
        acc.distance += bd.distance * inv_b;
        acc.shape += bd.shape * inv_b;
        acc.total += bd.total * inv_b;
      }
      adam_step(net, adam, cfg.learning_rate, cfg.weight_decay);

      prog.step += 1;
      prog.epoch = epoch;
      prog.cursor = b + 1;
      TrainLogEntry entry{prog.step, acc.score, acc.angle, acc.distance, acc.shape, acc.total};
      result.curve.push_back(entry);
      if (log.is_open()) {
        json line = {{"step", entry.step},        {"l_score", entry.l_score},
                     {"l_angle", entry.l_angle},  {"l_distance", entry.l_distance},
                     {"l_shape", entry.l_shape},  {"l_total", entry.l_total}};
        log << line.dump() << "\n";
      }
      if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
          prog.step % uint64_t(cfg.checkpoint_every) == 0) {
        save_checkpoint(checkpoint_dir + "/checkpoint.bin", net, cfg, law, adam, prog);
      }
    }
    prog.epoch = epoch + 1;
    prog.cursor = 0;
  }

  if (!checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_dir + "/checkpoint.bin", net, cfg, law, adam, prog);
  }
  result.progress = prog;
  return result;
}

}  // namespace afw
