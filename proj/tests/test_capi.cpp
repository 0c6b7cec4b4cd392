#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "afw.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) {
    path = fs::temp_directory_path() / (stem + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct ConfigHandle {
  afw_config* c = nullptr;
  ConfigHandle() : c(afw_config_desk()) {}
  ~ConfigHandle() { afw_config_free(c); }
  void set(const std::string& assignment) {
    REQUIRE(afw_config_override(c, assignment.c_str()) == AFW_OK);
  }
};

// Desk preset shrunk to a 32x32 frame and a throwaway network so data
// generation and a one-epoch training run stay in unit-test territory.
void shrink(ConfigHandle& h) {
  h.set("render.height=32");
  h.set("render.width=32");
  h.set("scene.shape=rectangle");
  h.set("scene.grid_rows=10");
  h.set("scene.grid_cols=10");
  h.set("scene.rest_spacing=0.012");
  h.set("model.input_h=32");
  h.set("model.input_w=32");
  h.set("model.stem_downsample=false");
  h.set("model.stem_channels=8");
  h.set("model.encoder_stages=[{\"blocks\":1,\"channels\":8,\"stride\":2}]");
  h.set("model.decoder_channels=[8]");
  h.set("model.score_head_stages=2");
  h.set("model.head_channel_schedule=[8,4]");
  h.set("model.se_reduction=4");
  h.set("train.epochs=1");
  h.set("train.batch_size=2");
  h.set("eval.n_scenes=2");
  h.set("eval.max_steps=2");
  h.set("eval.level=easy");
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

nlohmann::json dump_json(const afw_config* c) {
  char* buf = nullptr;
  REQUIRE(afw_config_dump(c, &buf) == AFW_OK);
  nlohmann::json j = nlohmann::json::parse(buf);
  afw_string_free(buf);
  return j;
}

}  // namespace

TEST_CASE("null arguments come back as contract errors with the call name") {
  CHECK(afw_config_load(nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(std::string(afw_last_error()).find("afw_config_load") != std::string::npos);
  CHECK(afw_config_save(nullptr, "x") == AFW_ERR_CONTRACT);
  CHECK(afw_config_override(nullptr, "a=1") == AFW_ERR_CONTRACT);
  CHECK(afw_config_dump(nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_file_digest(nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_dataset_digest(nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_gen_data(nullptr, "smoothing", 1, 1, 0, "d", nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_train_model(nullptr, "smoothing", "d", "o", 0) == AFW_ERR_CONTRACT);
  CHECK(afw_ensure_model(nullptr, "smoothing", "d", "c", nullptr, 0) == AFW_ERR_CONTRACT);
  CHECK(afw_rollout_once(nullptr, "random", nullptr, "smoothing", 0, "o") == AFW_ERR_CONTRACT);
  CHECK(afw_evaluate(nullptr, "random", nullptr, "smoothing", "o") == AFW_ERR_CONTRACT);
  CHECK(afw_ablate(nullptr, "a", nullptr, "d", nullptr, "c", "o") == AFW_ERR_CONTRACT);
  CHECK(afw_plot_run(nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_model_open(nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_model_input_size(nullptr, nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_model_predict(nullptr, nullptr, nullptr, 0, 0, nullptr, nullptr, nullptr, nullptr) ==
        AFW_ERR_CONTRACT);
  CHECK(afw_sim_create(nullptr, "smoothing", "easy", 0, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_sim_size(nullptr, nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_sim_render(nullptr, nullptr, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_sim_pull(nullptr, 0, 0, 0, 0, nullptr) == AFW_ERR_CONTRACT);
  CHECK(afw_sim_metrics(nullptr, nullptr, nullptr) == AFW_ERR_CONTRACT);

  // Frees accept NULL as a no-op.
  afw_config_free(nullptr);
  afw_string_free(nullptr);
  afw_model_free(nullptr);
  afw_sim_free(nullptr);
}

TEST_CASE("config handles build, override, dump, and round-trip") {
  afw_config* d = afw_config_default();
  afw_config* k = afw_config_desk();
  REQUIRE(d != nullptr);
  REQUIRE(k != nullptr);

  nlohmann::json jd = dump_json(d);
  nlohmann::json jk = dump_json(k);
  CHECK(jd["render"]["height"] == 128);
  CHECK(jk["render"]["height"] == 64);
  CHECK(jk["scene"]["grid_rows"] == 24);
  CHECK(jk["distance_law"]["d_b"] == 10.0);

  REQUIRE(afw_config_override(k, "train.epochs=7") == AFW_OK);
  REQUIRE(afw_config_override(k, "eval.level=easy") == AFW_OK);
  REQUIRE(afw_config_override(k, "loss_weights.lambda_s=25.0") == AFW_OK);
  nlohmann::json jk2 = dump_json(k);
  CHECK(jk2["train"]["epochs"] == 7);
  CHECK(jk2["eval"]["level"] == "easy");
  CHECK(jk2["loss_weights"]["lambda_s"] == 25.0);

  CHECK(afw_config_override(k, "train.no_such_key=1") == AFW_ERR_CONFIG);
  CHECK(std::string(afw_last_error()).find("unknown config key") != std::string::npos);
  CHECK(afw_config_override(k, "no.equals.sign") == AFW_ERR_CONFIG);
  // A rejected override leaves the config untouched.
  CHECK(dump_json(k) == jk2);

  TempDir dir("afw_capi_cfg_");
  std::string path = (dir.path / "cfg.json").string();
  REQUIRE(afw_config_save(k, path.c_str()) == AFW_OK);
  afw_config* back = nullptr;
  REQUIRE(afw_config_load(path.c_str(), &back) == AFW_OK);
  CHECK(dump_json(back) == jk2);
  afw_config_free(back);

  std::ofstream(dir.path / "broken.json") << "{ not json";
  afw_config* bad = nullptr;
  CHECK(afw_config_load((dir.path / "broken.json").string().c_str(), &bad) == AFW_ERR_CONFIG);
  std::ofstream(dir.path / "invalid.json") << "{\"render\":{\"height\":0}}";
  CHECK(afw_config_load((dir.path / "invalid.json").string().c_str(), &bad) == AFW_ERR_CONFIG);
  CHECK(std::string(afw_last_error()).size() > 0);

  afw_config_free(d);
  afw_config_free(k);
}

TEST_CASE("file digest matches the published sha-256 test vector") {
  TempDir dir("afw_capi_dig_");
  std::string p = (dir.path / "abc.bin").string();
  std::ofstream(p, std::ios::binary) << "abc";
  char hex[65];
  REQUIRE(afw_file_digest(p.c_str(), hex) == AFW_OK);
  CHECK(std::string(hex) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  char again[65];
  REQUIRE(afw_file_digest(p.c_str(), again) == AFW_OK);
  CHECK(std::memcmp(hex, again, 65) == 0);

  CHECK(afw_file_digest((dir.path / "missing.bin").string().c_str(), hex) != AFW_OK);
  CHECK(std::string(afw_last_error()).size() > 0);
}

TEST_CASE("simulator handles render, pull, and stay seed-deterministic") {
  ConfigHandle h;
  shrink(h);

  afw_sim* a = nullptr;
  REQUIRE(afw_sim_create(h.c, "smoothing", "easy", 11, &a) == AFW_OK);
  int sh = 0, sw = 0;
  REQUIRE(afw_sim_size(a, &sh, &sw) == AFW_OK);
  CHECK(sh == 32);
  CHECK(sw == 32);

  std::vector<unsigned char> rgb(size_t(sh) * sw * 3), mask(size_t(sh) * sw);
  REQUIRE(afw_sim_render(a, rgb.data(), mask.data()) == AFW_OK);
  int on = 0;
  for (unsigned char m : mask) {
    CHECK((m == 0 || m == 1));
    on += m;
  }
  CHECK(on > 0);
  CHECK(on < sh * sw);

  afw_sim* b = nullptr;
  REQUIRE(afw_sim_create(h.c, "smoothing", "easy", 11, &b) == AFW_OK);
  std::vector<unsigned char> rgb2(rgb.size()), mask2(mask.size());
  REQUIRE(afw_sim_render(b, rgb2.data(), mask2.data()) == AFW_OK);
  CHECK(rgb == rgb2);
  CHECK(mask == mask2);

  double cov_a = 0, iou_a = 0;
  REQUIRE(afw_sim_metrics(a, &cov_a, &iou_a) == AFW_OK);
  CHECK(cov_a > 0.05);
  CHECK(cov_a <= 1.0);
  CHECK(iou_a == 0.0);  // smoothing sims report no alignment target

  // Identical pulls keep the two sims in lockstep.
  int missed = -1;
  REQUIRE(afw_sim_pull(a, sw / 2.0, sh / 2.0, 0.7, 5.0, &missed) == AFW_OK);
  CHECK(missed == 0);
  REQUIRE(afw_sim_pull(b, sw / 2.0, sh / 2.0, 0.7, 5.0, nullptr) == AFW_OK);
  double cov_b = 0, iou_b = 0;
  REQUIRE(afw_sim_metrics(a, &cov_a, &iou_a) == AFW_OK);
  REQUIRE(afw_sim_metrics(b, &cov_b, &iou_b) == AFW_OK);
  CHECK(cov_a == cov_b);

  // A grab in empty background touches nothing.
  REQUIRE(afw_sim_pull(a, 1.0, 1.0, 0.0, 5.0, &missed) == AFW_OK);
  CHECK(missed == 1);

  // Alignment sims measure IoU against the flat target.
  afw_sim* al = nullptr;
  REQUIRE(afw_sim_create(h.c, "alignment", "easy", 11, &al) == AFW_OK);
  double cov = 0, iou = 0;
  REQUIRE(afw_sim_metrics(al, &cov, &iou) == AFW_OK);
  CHECK(iou > 0.0);
  CHECK(iou <= 1.0);

  CHECK(afw_sim_create(h.c, "ironing", "easy", 1, &b) == AFW_ERR_CONFIG);
  CHECK(afw_sim_create(h.c, "smoothing", "medium", 1, &b) == AFW_ERR_CONFIG);

  afw_sim_free(a);
  afw_sim_free(b);
  afw_sim_free(al);
}

TEST_CASE("pipeline runs gen, train, predict, rollout, evaluate, and plot") {
  ConfigHandle h;
  shrink(h);
  TempDir dir("afw_capi_pipe_");
  std::string data = (dir.path / "data").string();
  std::string model_dir = (dir.path / "model").string();

  char digest[65];
  REQUIRE(afw_gen_data(h.c, "smoothing", 6, 3, 300, data.c_str(), digest) == AFW_OK);
  CHECK(std::string(digest).size() == 64);

  // Same request reuses the files and reports the same digest.
  char digest2[65];
  REQUIRE(afw_gen_data(h.c, "smoothing", 6, 3, 300, data.c_str(), digest2) == AFW_OK);
  CHECK(std::string(digest) == digest2);
  char direct[65];
  REQUIRE(afw_dataset_digest(data.c_str(), direct) == AFW_OK);
  CHECK(std::string(digest) == direct);

  REQUIRE(afw_train_model(h.c, "smoothing", data.c_str(), model_dir.c_str(), 0) == AFW_OK);
  std::string ckpt = model_dir + "/checkpoint.bin";
  REQUIRE(fs::exists(ckpt));
  REQUIRE(fs::exists(model_dir + "/train_log.jsonl"));

  afw_model* m = nullptr;
  REQUIRE(afw_model_open(ckpt.c_str(), &m) == AFW_OK);
  int mh = 0, mw = 0;
  REQUIRE(afw_model_input_size(m, &mh, &mw) == AFW_OK);
  CHECK(mh == 32);
  CHECK(mw == 32);

  afw_sim* sim = nullptr;
  REQUIRE(afw_sim_create(h.c, "smoothing", "hard", 21, &sim) == AFW_OK);
  std::vector<unsigned char> rgb(size_t(mh) * mw * 3), mask(size_t(mh) * mw);
  REQUIRE(afw_sim_render(sim, rgb.data(), mask.data()) == AFW_OK);

  unsigned long long passes0 = afw_forward_passes();
  double x = -1, y = -1, theta = 99, d = -1;
  REQUIRE(afw_model_predict(m, rgb.data(), mask.data(), mh, mw, &x, &y, &theta, &d) == AFW_OK);
  CHECK(afw_forward_passes() == passes0 + 1);
  CHECK(x >= 0.0);
  CHECK(x < mw);
  CHECK(y >= 0.0);
  CHECK(y < mh);
  CHECK(mask[size_t(y) * mw + size_t(x)] == 1);
  CHECK(theta >= -M_PI);
  CHECK(theta <= M_PI);
  CHECK(d >= 2.5);
  CHECK(d <= 30.0);

  // The same frame decodes to the same action.
  double x2, y2, theta2, d2;
  REQUIRE(afw_model_predict(m, rgb.data(), mask.data(), mh, mw, &x2, &y2, &theta2, &d2) ==
          AFW_OK);
  CHECK(afw_forward_passes() == passes0 + 2);
  CHECK(x == x2);
  CHECK(y == y2);
  CHECK(theta == theta2);
  CHECK(d == d2);

  std::vector<unsigned char> none(mask.size(), 0);
  CHECK(afw_model_predict(m, rgb.data(), none.data(), mh, mw, &x, &y, &theta, &d) ==
        AFW_ERR_NO_ACTION);
  CHECK(afw_model_predict(m, rgb.data(), mask.data(), 8, 8, &x, &y, &theta, &d) ==
        AFW_ERR_CONTRACT);

  std::string rollout = (dir.path / "rollout.json").string();
  REQUIRE(afw_rollout_once(h.c, "model", ckpt.c_str(), "smoothing", 77, rollout.c_str()) ==
          AFW_OK);
  nlohmann::json rj = nlohmann::json::parse(read_file(rollout));
  CHECK(rj["policy"] == "model");
  CHECK(rj["seed"] == 77);
  CHECK(rj["steps"].is_array());
  CHECK(rj["steps"].size() <= 2);
  for (const auto& s : rj["steps"]) CHECK(s["forward_passes"] == 1);

  CHECK(afw_rollout_once(h.c, "model", nullptr, "smoothing", 77, rollout.c_str()) ==
        AFW_ERR_CONFIG);
  CHECK(afw_rollout_once(h.c, "bogus", nullptr, "smoothing", 77, rollout.c_str()) ==
        AFW_ERR_CONFIG);
  CHECK(std::string(afw_last_error()).find("bogus") != std::string::npos);

  // Two evaluation runs land byte-identical summaries and records.
  std::string run1 = (dir.path / "run1").string();
  std::string run2 = (dir.path / "run2").string();
  REQUIRE(afw_evaluate(h.c, "random", nullptr, "smoothing", run1.c_str()) == AFW_OK);
  REQUIRE(afw_evaluate(h.c, "random", nullptr, "smoothing", run2.c_str()) == AFW_OK);
  CHECK(read_file(run1 + "/summary.txt") == read_file(run2 + "/summary.txt"));
  CHECK(read_file(run1 + "/summary.json") == read_file(run2 + "/summary.json"));
  // Per-step wall-clock latency is the one legitimately run-dependent field.
  auto strip_latency = [](const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    for (auto& s : j["steps"]) s.erase("decision_latency_ms");
    return j;
  };
  CHECK(strip_latency(read_file(run1 + "/records/seed_9000.json")) ==
        strip_latency(read_file(run2 + "/records/seed_9000.json")));
  nlohmann::json sj = nlohmann::json::parse(read_file(run1 + "/summary.json"));
  CHECK(sj["n_scenes"] == 2);
  CHECK(sj["policy"] == "random");

  REQUIRE(afw_plot_run(run1.c_str()) == AFW_OK);
  CHECK(fs::exists(run1 + "/plots/coverage.ppm"));
  CHECK(fs::exists(run1 + "/plots/coverage.csv"));

  CHECK(afw_ablate(h.c, nullptr, nullptr, data.c_str(), nullptr, data.c_str(),
                   (dir.path / "abl").string().c_str()) == AFW_ERR_CONFIG);

  afw_model_free(m);
  afw_sim_free(sim);
}

TEST_CASE("model open rejects missing and corrupt checkpoints") {
  TempDir dir("afw_capi_ck_");
  afw_model* m = nullptr;
  CHECK(afw_model_open((dir.path / "missing.bin").string().c_str(), &m) != AFW_OK);
  CHECK(std::string(afw_last_error()).size() > 0);

  std::string bad = (dir.path / "bad.bin").string();
  std::ofstream(bad, std::ios::binary) << "NOTACKPTxxxxxxxxxxxxxxxxxxxxxxxx";
  CHECK(afw_model_open(bad.c_str(), &m) == AFW_ERR_DATA);
  CHECK(std::string(afw_last_error()).size() > 0);
}
