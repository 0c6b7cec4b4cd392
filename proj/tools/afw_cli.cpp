// Command-line front end for the action-field workbench. Talks to the engine
// exclusively through the C API in afw.h; everything here is flag parsing,
// run-directory layout, and manifest bookkeeping.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "afw.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(int rc) {
  std::fprintf(stderr, "error: code=%d msg=%s\n", rc, afw_last_error());
  return 2;
}

#define AFW_CHECK(call)                    \
  do {                                     \
    int rc_ = (call);                      \
    if (rc_ != AFW_OK) return fail(rc_);   \
  } while (0)

struct ConfigHandle {
  afw_config* cfg = nullptr;
  ~ConfigHandle() { afw_config_free(cfg); }
};

json config_echo(const afw_config* cfg) {
  char* dump = nullptr;
  if (afw_config_dump(cfg, &dump) != AFW_OK) return json();
  json j = json::parse(dump, nullptr, false);
  afw_string_free(dump);
  return j.is_discarded() ? json() : j;
}

std::string file_digest(const std::string& path) {
  char hex[65];
  if (afw_file_digest(path.c_str(), hex) != AFW_OK) return "";
  return hex;
}

// Digest of every regular file under dir, keyed by relative path.
json output_digests(const std::string& dir) {
  json out = json::object();
  if (!fs::is_directory(dir)) return out;
  std::vector<std::string> rels;
  for (auto it = fs::recursive_directory_iterator(dir);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    std::string rel = fs::relative(it->path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    rels.push_back(rel);
  }
  std::sort(rels.begin(), rels.end());
  for (const std::string& rel : rels) out[rel] = file_digest(dir + "/" + rel);
  return out;
}

int write_manifest(const std::string& out_dir, const std::string& command,
                   const std::vector<std::string>& argv_echo, const afw_config* cfg,
                   const std::vector<std::string>& overrides, const json& inputs,
                   const json& seeds) {
  json m;
  m["command"] = command;
  m["argv"] = argv_echo;
  m["config"] = config_echo(cfg);
  m["overrides"] = overrides;
  m["inputs"] = inputs;
  m["seeds"] = seeds;
  m["outputs"] = output_digests(out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
  if (!out) {
    std::fprintf(stderr, "error: code=%d msg=cannot write %s/manifest.json\n", AFW_ERR_DATA,
                 out_dir.c_str());
    return 2;
  }
  out << m.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Peel off --section.key=value overrides before CLI11 sees the argv.
  std::vector<std::string> args;
  std::vector<std::string> overrides;
  std::vector<std::string> argv_echo;
  for (int i = 0; i < argc; ++i) {
    std::string a = argv[i];
    argv_echo.push_back(a);
    if (i > 0 && a.rfind("--", 0) == 0) {
      size_t dot = a.find('.'), eq = a.find('=');
      if (dot != std::string::npos && eq != std::string::npos && dot < eq && dot > 2) {
        overrides.push_back(a.substr(2));
        continue;
      }
    }
    args.push_back(a);
  }

  CLI::App app{"Dense action-field workbench for fabric smoothing and alignment"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset = "desk";
  std::vector<std::string> set_args;
  app.add_option("--config", config_path, "Workbench config file (JSON)");
  app.add_option("--preset", preset, "Built-in config when no file is given: desk or full")
      ->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--set", set_args, "Config override section.key=value (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate a labeled pull dataset");
  std::string gen_task = "smoothing", gen_out;
  int gen_episodes = 1000, gen_steps = 8;
  unsigned long long gen_seed = 1;
  gen->add_option("--task", gen_task, "smoothing or alignment");
  gen->add_option("--episodes", gen_episodes, "Number of episodes");
  gen->add_option("--steps", gen_steps, "Pull steps per episode");
  gen->add_option("--seed", gen_seed, "Base seed; episode i uses seed+i");
  gen->add_option("--out", gen_out, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  std::string train_task = "smoothing", train_data, train_out;
  bool train_resume = false;
  train->add_option("--task", train_task, "smoothing or alignment");
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  train->add_flag("--resume", train_resume, "Continue from out/checkpoint.bin if present");

  auto* roll = app.add_subcommand("rollout", "Run one greedy rollout");
  std::string roll_policy = "model", roll_ckpt, roll_task = "smoothing", roll_out;
  unsigned long long roll_seed = 9000;
  roll->add_option("--policy", roll_policy, "model, random, or radial")
      ->check(CLI::IsMember({"model", "random", "radial"}));
  roll->add_option("--checkpoint", roll_ckpt, "Model checkpoint (model policy)");
  roll->add_option("--task", roll_task, "smoothing or alignment");
  roll->add_option("--seed", roll_seed, "Scene seed");
  roll->add_option("--out", roll_out, "Run directory")->required();

  auto* eval = app.add_subcommand("evaluate", "Evaluate a policy over many scenes");
  std::string eval_policy = "model", eval_ckpt, eval_task = "smoothing", eval_out;
  eval->add_option("--policy", eval_policy, "model, random, or radial")
      ->check(CLI::IsMember({"model", "random", "radial"}));
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint (model policy)");
  eval->add_option("--task", eval_task, "smoothing or alignment");
  eval->add_option("--out", eval_out, "Run directory")->required();

  auto* abl = app.add_subcommand("ablate", "Train and score config variants");
  std::string abl_variants, abl_sweep, abl_data, abl_align_data, abl_cache, abl_out;
  abl->add_option("--variants", abl_variants,
                  "Score-map variants, letters a..h (comma list or 'all')");
  abl->add_option("--shape-sweep", abl_sweep, "Alignment shape-loss weights, comma list");
  abl->add_option("--data", abl_data, "Smoothing dataset directory");
  abl->add_option("--align-data", abl_align_data, "Alignment dataset directory");
  abl->add_option("--cache", abl_cache, "Trained-model cache directory");
  abl->add_option("--out", abl_out, "Run directory")->required();

  auto* plot = app.add_subcommand("plot", "Render curves for a finished run");
  std::string plot_run;
  plot->add_option("--run", plot_run, "Run directory holding records/")->required();

  std::vector<char*> cargs;
  for (auto& s : args) cargs.push_back(s.data());
  try {
    app.parse(int(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: code=%d msg=%s\n", AFW_ERR_CONFIG, e.what());
    return 1;
  }

  ConfigHandle ch;
  if (!config_path.empty()) {
    AFW_CHECK(afw_config_load(config_path.c_str(), &ch.cfg));
  } else {
    ch.cfg = preset == "full" ? afw_config_default() : afw_config_desk();
  }
  for (const std::string& s : set_args) overrides.push_back(s);
  for (const std::string& o : overrides) {
    AFW_CHECK(afw_config_override(ch.cfg, o.c_str()));
  }

  if (*gen) {
    char digest[65];
    AFW_CHECK(afw_gen_data(ch.cfg, gen_task.c_str(), gen_episodes, gen_steps, gen_seed,
                           gen_out.c_str(), digest));
    json inputs = json::object();
    json seeds = {{"base_seed", gen_seed}, {"episodes", gen_episodes}};
    int rc = write_manifest(gen_out, "gen-data", argv_echo, ch.cfg, overrides, inputs, seeds);
    if (rc) return rc;
    std::printf("dataset %s sha256 %s\n", gen_out.c_str(), digest);
    return 0;
  }

  if (*train) {
    char data_digest[65];
    AFW_CHECK(afw_dataset_digest(train_data.c_str(), data_digest));
    AFW_CHECK(afw_train_model(ch.cfg, train_task.c_str(), train_data.c_str(),
                              train_out.c_str(), train_resume ? 1 : 0));
    json inputs = {{"dataset", {{"path", train_data}, {"sha256", data_digest}}}};
    json seeds = json::object();
    int rc = write_manifest(train_out, "train", argv_echo, ch.cfg, overrides, inputs, seeds);
    if (rc) return rc;
    std::printf("checkpoint %s/checkpoint.bin sha256 %s\n", train_out.c_str(),
                file_digest(train_out + "/checkpoint.bin").c_str());
    return 0;
  }

  if (*roll) {
    const char* ckpt = roll_ckpt.empty() ? nullptr : roll_ckpt.c_str();
    std::string rec_path = roll_out + "/records/seed_" + std::to_string(roll_seed) + ".json";
    AFW_CHECK(afw_rollout_once(ch.cfg, roll_policy.c_str(), ckpt, roll_task.c_str(), roll_seed,
                               rec_path.c_str()));
    json inputs = json::object();
    if (ckpt) inputs["checkpoint"] = {{"path", roll_ckpt}, {"sha256", file_digest(roll_ckpt)}};
    json seeds = {{"seed", roll_seed}};
    int rc = write_manifest(roll_out, "rollout", argv_echo, ch.cfg, overrides, inputs, seeds);
    if (rc) return rc;
    std::printf("record %s\n", rec_path.c_str());
    return 0;
  }

  if (*eval) {
    const char* ckpt = eval_ckpt.empty() ? nullptr : eval_ckpt.c_str();
    AFW_CHECK(afw_evaluate(ch.cfg, eval_policy.c_str(), ckpt, eval_task.c_str(),
                           eval_out.c_str()));
    json inputs = json::object();
    if (ckpt) inputs["checkpoint"] = {{"path", eval_ckpt}, {"sha256", file_digest(eval_ckpt)}};
    json seeds = json::object();
    int rc = write_manifest(eval_out, "evaluate", argv_echo, ch.cfg, overrides, inputs, seeds);
    if (rc) return rc;
    std::ifstream summary(eval_out + "/summary.txt");
    std::string line;
    while (std::getline(summary, line)) std::printf("%s\n", line.c_str());
    return 0;
  }

  if (*abl) {
    if (abl_variants == "all") abl_variants = "a,b,c,d,e,f,g,h";
    std::string cache = abl_cache.empty() ? abl_out + "/cache" : abl_cache;
    AFW_CHECK(afw_ablate(ch.cfg, abl_variants.empty() ? nullptr : abl_variants.c_str(),
                         abl_sweep.empty() ? nullptr : abl_sweep.c_str(),
                         abl_data.empty() ? nullptr : abl_data.c_str(),
                         abl_align_data.empty() ? nullptr : abl_align_data.c_str(),
                         cache.c_str(), abl_out.c_str()));
    json inputs = json::object();
    if (!abl_data.empty()) {
      char d[65];
      AFW_CHECK(afw_dataset_digest(abl_data.c_str(), d));
      inputs["dataset"] = {{"path", abl_data}, {"sha256", d}};
    }
    if (!abl_align_data.empty()) {
      char d[65];
      AFW_CHECK(afw_dataset_digest(abl_align_data.c_str(), d));
      inputs["align_dataset"] = {{"path", abl_align_data}, {"sha256", d}};
    }
    json seeds = json::object();
    int rc = write_manifest(abl_out, "ablate", argv_echo, ch.cfg, overrides, inputs, seeds);
    if (rc) return rc;
    std::ifstream table(abl_out + "/ablation.txt");
    std::string line;
    while (std::getline(table, line)) std::printf("%s\n", line.c_str());
    return 0;
  }

  if (*plot) {
    AFW_CHECK(afw_plot_run(plot_run.c_str()));
    std::printf("plots %s/plots\n", plot_run.c_str());
    return 0;
  }

  return 0;
}
