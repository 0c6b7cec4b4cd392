#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/actionfield.hpp"
#include "core/datagen.hpp"
#include "core/losses.hpp"
#include "core/net.hpp"
#include "core/plane.hpp"

namespace afw {

struct TrainError : Error {
  using Error::Error;
};

struct StageSpec {
  int blocks = 1;
  int channels = 64;
  int stride = 1;

  bool operator==(const StageSpec& o) const {
    return blocks == o.blocks && channels == o.channels && stride == o.stride;
  }
};

struct ModelConfig {
  int input_h = 128;
  int input_w = 128;
  bool stem_downsample = true;  // 7x7 stride-2 stem conv plus 3x3 stride-2 maxpool
  int stem_channels = 64;
  std::vector<StageSpec> encoder_stages = {{2, 64, 1}, {2, 128, 2}, {2, 256, 2}, {2, 512, 2}};
  std::vector<int> decoder_channels = {256, 128, 64, 64, 32};  // one entry per 2x upsample
  int score_head_stages = 3;
  std::vector<int> head_channel_schedule = {64, 32, 16};
  int se_reduction = 8;
  bool use_se = true;
  uint64_t seed = 0;

  void validate() const;
  int downsample_factor() const;

  bool operator==(const ModelConfig& o) const;
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  int epochs = 20;
  std::string optimizer_kind = "adam";
  double weight_decay = 0.0;
  std::string task = "smoothing";
  LossWeights loss_weights;
  int enlarge_radius = 3;
  int checkpoint_every = 500;  // steps; 0 writes only the final checkpoint
  uint64_t seed = 0;

  void validate() const;
  TaskKind task_kind() const { return task_from_string(task); }
};

// Process-wide count of full encoder-decoder passes; rollouts assert exactly
// one per action decision.
uint64_t net_forward_passes();
void bump_net_forward_passes();

// Dense action generator: residual encoder, skip-concatenating decoder, and
// the three output heads. Scalar-templated so gradient tests run in double.
template <typename S>
class Net {
 public:
  explicit Net(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamRef<S>>& params() { return params_; }
  long param_count() const {
    long n = 0;
    for (const auto& p : params_) n += p.n;
    return n;
  }

  FeatureMap<S> image_to_input(const ImageRGB& img) const {
    if (img.rows != cfg_.input_h || img.cols != cfg_.input_w) {
      throw ContractError("image size does not match the model input size");
    }
    FeatureMap<S> in(3, img.rows, img.cols);
    for (int y = 0; y < img.rows; ++y) {
      for (int x = 0; x < img.cols; ++x) {
        const uint8_t* p = img.px(y, x);
        for (int c = 0; c < 3; ++c) in.m(c, y * img.cols + x) = S(p[c]) / S(255);
      }
    }
    return in;
  }

  ActionMaps forward(const ImageRGB& img) { return forward_input(image_to_input(img)); }

  ActionMaps forward_input(const FeatureMap<S>& in) {
    FeatureMap<S> f = stem_relu_.forward(stem_conv_->forward(in));
    skip_cache_[0] = f;
    if (stem_pool_) f = stem_pool_->forward(f);
    for (size_t k = 0; k < stages_.size(); ++k) {
      for (auto& block : stages_[k]) f = block->forward(f);
      if (k + 1 < stages_.size()) skip_cache_[1 + k] = f;
    }
    for (auto& step : dec_) {
      FeatureMap<S> u = step.up.forward(f);
      if (step.skip_index >= 0) {
        const FeatureMap<S>& s = skip_cache_[step.skip_index];
        FeatureMap<S> cat(u.c + s.c, u.h, u.w);
        cat.m.topRows(u.c) = u.m;
        cat.m.bottomRows(s.c) = s.m;
        f = step.relu.forward(step.conv->forward(cat));
      } else {
        f = step.relu.forward(step.conv->forward(u));
      }
    }

    FeatureMap<S> sf = f;
    for (int i = 0; i < cfg_.score_head_stages; ++i) {
      sf = score_relus_[i].forward(score_convs_[i]->forward(sf));
      if (cfg_.use_se) sf = score_se_[i]->forward(sf);
    }
    FeatureMap<S> score = score_proj_->forward(sf);

    FeatureMap<S> ah = ang_r2_.forward(ang2_->forward(ang_r1_.forward(ang1_->forward(f))));
    FeatureMap<S> sin_fm = tanh_sin_.forward(ang_sin_->forward(ah));
    FeatureMap<S> cos_fm = tanh_cos_.forward(ang_cos_->forward(ah));

    FeatureMap<S> dh = dist_r2_.forward(dist2_->forward(dist_r1_.forward(dist1_->forward(f))));
    FeatureMap<S> dist = dist3_->forward(dh);

    bump_net_forward_passes();
    ActionMaps maps;
    maps.score = plane_of(score);
    maps.sin_theta = plane_of(sin_fm);
    maps.cos_theta = plane_of(cos_fm);
    maps.dist_raw = plane_of(dist);
    return maps;
  }

  // Backprop of the four plane gradients into the parameter grads (which
  // accumulate until zero_grads). Uses the activations of the last forward.
  void backward(const MapGradients& g) {
    FeatureMap<S> dscore = fm_of(g.score);
    FeatureMap<S> dsin = fm_of(g.sin_theta);
    FeatureMap<S> dcos = fm_of(g.cos_theta);
    FeatureMap<S> ddist = fm_of(g.dist_raw);

    FeatureMap<S> dsf = score_proj_->backward(dscore);
    for (int i = cfg_.score_head_stages - 1; i >= 0; --i) {
      if (cfg_.use_se) dsf = score_se_[i]->backward(dsf);
      dsf = score_convs_[i]->backward(score_relus_[i].backward(dsf));
    }

    FeatureMap<S> dah = ang_sin_->backward(tanh_sin_.backward(dsin));
    {
      FeatureMap<S> dah2 = ang_cos_->backward(tanh_cos_.backward(dcos));
      dah.m += dah2.m;
    }
    FeatureMap<S> df_ang =
        ang1_->backward(ang_r1_.backward(ang2_->backward(ang_r2_.backward(dah))));

    FeatureMap<S> df_dist =
        dist1_->backward(dist_r1_.backward(dist2_->backward(dist_r2_.backward(
            dist3_->backward(ddist)))));

    FeatureMap<S> df = dsf;
    df.m += df_ang.m;
    df.m += df_dist.m;

    for (size_t i = 0; i < skip_cache_.size(); ++i) {
      skip_grad_[i].setZero(skip_cache_[i].c, skip_cache_[i].pixels());
    }
    for (size_t i = dec_.size(); i-- > 0;) {
      DecoderStep& step = dec_[i];
      FeatureMap<S> dcat = step.conv->backward(step.relu.backward(df));
      if (step.skip_index >= 0) {
        int cu = dcat.c - skip_cache_[step.skip_index].c;
        skip_grad_[step.skip_index] += dcat.m.bottomRows(skip_cache_[step.skip_index].c);
        FeatureMap<S> du(cu, dcat.h, dcat.w);
        du.m = dcat.m.topRows(cu);
        df = step.up.backward(du);
      } else {
        df = step.up.backward(dcat);
      }
    }

    for (size_t k = stages_.size(); k-- > 0;) {
      if (k + 1 < stages_.size()) df.m += skip_grad_[1 + k];
      for (size_t b = stages_[k].size(); b-- > 0;) df = stages_[k][b]->backward(df);
    }
    if (stem_pool_) df = stem_pool_->backward(df);
    df.m += skip_grad_[0];
    stem_conv_->backward(stem_relu_.backward(df));
  }

  void zero_grads() {
    for (auto& p : params_) std::fill(p.grad, p.grad + p.n, S(0));
  }

 private:
  struct DecoderStep {
    Upsample2<S> up;
    int skip_index = -1;
    std::unique_ptr<Conv2d<S>> conv;
    ReLU<S> relu;
  };

  RealPlane plane_of(const FeatureMap<S>& f) const {
    RealPlane p(f.h, f.w, 0.0);
    for (int j = 0; j < f.pixels(); ++j) p.v[j] = double(f.m(0, j));
    return p;
  }

  FeatureMap<S> fm_of(const RealPlane& p) const {
    FeatureMap<S> f(1, p.rows, p.cols);
    for (size_t j = 0; j < p.v.size(); ++j) f.m(0, long(j)) = S(p.v[j]);
    return f;
  }

  void build() {
    Rng rng(cfg_.seed, 0x11E7);
    int h = cfg_.input_h, w = cfg_.input_w;
    struct Slot {
      int h, w, c;
      bool used = false;
    };
    std::vector<Slot> slots;

    stem_conv_ = std::make_unique<Conv2d<S>>(3, cfg_.stem_channels,
                                             cfg_.stem_downsample ? 7 : 3,
                                             cfg_.stem_downsample ? 2 : 1, rng, "stem");
    if (cfg_.stem_downsample) {
      h /= 2;
      w /= 2;
    }
    slots.push_back({h, w, cfg_.stem_channels});
    if (cfg_.stem_downsample) {
      stem_pool_ = std::make_unique<MaxPool<S>>(3, 2, 1);
      h /= 2;
      w /= 2;
    }

    int c = cfg_.stem_channels;
    for (size_t k = 0; k < cfg_.encoder_stages.size(); ++k) {
      const StageSpec& st = cfg_.encoder_stages[k];
      std::vector<std::unique_ptr<ResBlock<S>>> blocks;
      for (int b = 0; b < st.blocks; ++b) {
        int ci = b == 0 ? c : st.channels;
        int stride = b == 0 ? st.stride : 1;
        blocks.push_back(std::make_unique<ResBlock<S>>(
            ci, st.channels, stride, rng,
            "enc" + std::to_string(k) + "." + std::to_string(b)));
      }
      stages_.push_back(std::move(blocks));
      h /= st.stride;
      w /= st.stride;
      c = st.channels;
      if (k + 1 < cfg_.encoder_stages.size()) slots.push_back({h, w, c});
    }

    skip_cache_.resize(slots.size());
    skip_grad_.resize(slots.size());

    for (size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
      DecoderStep step;
      h *= 2;
      w *= 2;
      int in_ch = c;
      for (size_t s = slots.size(); s-- > 0;) {
        if (!slots[s].used && slots[s].h == h && slots[s].w == w) {
          step.skip_index = int(s);
          slots[s].used = true;
          in_ch += slots[s].c;
          break;
        }
      }
      step.conv = std::make_unique<Conv2d<S>>(in_ch, cfg_.decoder_channels[i], 3, 1, rng,
                                              "dec" + std::to_string(i));
      dec_.push_back(std::move(step));
      c = cfg_.decoder_channels[i];
    }
    if (h != cfg_.input_h || w != cfg_.input_w) {
      throw ConfigError("decoder does not return to input resolution");
    }

    const std::vector<int>& sched = cfg_.head_channel_schedule;
    int sc = c;
    for (int i = 0; i < cfg_.score_head_stages; ++i) {
      int co = sched[size_t(i)];
      score_convs_.push_back(
          std::make_unique<Conv2d<S>>(sc, co, 3, 1, rng, "score" + std::to_string(i)));
      score_relus_.emplace_back();
      if (cfg_.use_se) {
        score_se_.push_back(
            std::make_unique<SEBlock<S>>(co, cfg_.se_reduction, rng, "se" + std::to_string(i)));
      }
      sc = co;
    }
    score_proj_ = std::make_unique<Conv2d<S>>(sc, 1, 1, 1, rng, "score_proj");

    int ah1 = sched[sched.size() - 2], ah2 = sched[sched.size() - 1];
    ang1_ = std::make_unique<Conv2d<S>>(c, ah1, 1, 1, rng, "ang1");
    ang2_ = std::make_unique<Conv2d<S>>(ah1, ah2, 1, 1, rng, "ang2");
    ang_sin_ = std::make_unique<Conv2d<S>>(ah2, 1, 1, 1, rng, "ang_sin");
    ang_cos_ = std::make_unique<Conv2d<S>>(ah2, 1, 1, 1, rng, "ang_cos");
    dist1_ = std::make_unique<Conv2d<S>>(c, ah1, 1, 1, rng, "dist1");
    dist2_ = std::make_unique<Conv2d<S>>(ah1, ah2, 1, 1, rng, "dist2");
    dist3_ = std::make_unique<Conv2d<S>>(ah2, 1, 1, 1, rng, "dist3");

    stem_conv_->collect_params(params_);
    for (auto& st : stages_) {
      for (auto& b : st) b->collect_params(params_);
    }
    for (auto& d : dec_) d.conv->collect_params(params_);
    for (size_t i = 0; i < score_convs_.size(); ++i) {
      score_convs_[i]->collect_params(params_);
      if (cfg_.use_se) score_se_[i]->collect_params(params_);
    }
    score_proj_->collect_params(params_);
    ang1_->collect_params(params_);
    ang2_->collect_params(params_);
    ang_sin_->collect_params(params_);
    ang_cos_->collect_params(params_);
    dist1_->collect_params(params_);
    dist2_->collect_params(params_);
    dist3_->collect_params(params_);
  }

  ModelConfig cfg_;
  std::unique_ptr<Conv2d<S>> stem_conv_;
  ReLU<S> stem_relu_;
  std::unique_ptr<MaxPool<S>> stem_pool_;
  std::vector<std::vector<std::unique_ptr<ResBlock<S>>>> stages_;
  std::vector<DecoderStep> dec_;
  std::vector<FeatureMap<S>> skip_cache_;
  std::vector<Mat<S>> skip_grad_;
  std::vector<std::unique_ptr<Conv2d<S>>> score_convs_;
  std::vector<ReLU<S>> score_relus_;
  std::vector<std::unique_ptr<SEBlock<S>>> score_se_;
  std::unique_ptr<Conv2d<S>> score_proj_;
  std::unique_ptr<Conv2d<S>> ang1_, ang2_, ang_sin_, ang_cos_;
  ReLU<S> ang_r1_, ang_r2_;
  Tanh<S> tanh_sin_, tanh_cos_;
  std::unique_ptr<Conv2d<S>> dist1_, dist2_, dist3_;
  ReLU<S> dist_r1_, dist_r2_;
  std::vector<ParamRef<S>> params_;
};

using ModelNet = Net<float>;

struct AdamState {
  std::vector<float> m, v;
  uint64_t t = 0;
};

struct TrainProgress {
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t cursor = 0;  // batch index within the current epoch
};

struct TrainLogEntry {
  uint64_t step = 0;
  double l_score = 0, l_angle = 0, l_distance = 0, l_shape = 0, l_total = 0;
};

struct TrainResult {
  std::vector<TrainLogEntry> curve;
  TrainProgress progress;
};

// Minibatch descent on the four-term objective. Deterministic given (seed,
// config, data); pass a resumed AdamState and progress to continue a run.
// checkpoint_dir "" disables checkpoint and log files.
TrainResult train(ModelNet& net, const std::vector<TrainingSample>& data,
                  const TrainConfig& cfg, const DistanceLaw& law,
                  const std::string& checkpoint_dir, AdamState* adam_io = nullptr,
                  TrainProgress start = {});

void save_checkpoint(const std::string& path, ModelNet& net, const TrainConfig& train_cfg,
                     const DistanceLaw& law, const AdamState& adam,
                     const TrainProgress& progress);

struct LoadedCheckpoint {
  ModelConfig model;
  TrainConfig train;
  DistanceLaw law;  // decoding law the model was trained under
  AdamState adam;
  TrainProgress progress;
  std::vector<float> params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

void apply_params(ModelNet& net, const std::vector<float>& flat);
std::vector<float> extract_params(ModelNet& net);

}  // namespace afw
