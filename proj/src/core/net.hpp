#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace afw {

// Minimal conv-net framework: explicit layers with hand-written backward
// passes, im2col + GEMM convolutions, single-sample activations. Templated on
// the scalar so gradient tests can run the whole net in double precision.

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Feature map: channels x (h*w), one pixel per column.
template <typename S>
struct FeatureMap {
  int c = 0, h = 0, w = 0;
  Mat<S> m;

  FeatureMap() = default;
  FeatureMap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), m(Mat<S>::Zero(c_, h_ * w_)) {}
  int pixels() const { return h * w; }
};

template <typename S>
struct ParamRef {
  S* value;
  S* grad;
  long n;
  std::string name;
};

template <typename S>
struct Layer {
  virtual ~Layer() = default;
  virtual FeatureMap<S> forward(const FeatureMap<S>& x) = 0;
  virtual FeatureMap<S> backward(const FeatureMap<S>& dy) = 0;
  virtual void collect_params(std::vector<ParamRef<S>>& out) { (void)out; }
};

namespace netdetail {

template <typename S>
void im2col(const FeatureMap<S>& x, int k, int stride, int pad, Mat<S>& col, int& ho, int& wo) {
  ho = (x.h + 2 * pad - k) / stride + 1;
  wo = (x.w + 2 * pad - k) / stride + 1;
  col.setZero(x.c * k * k, ho * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      int jo = oy * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= x.h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= x.w) continue;
          col.block((ky * k + kx) * x.c, jo, x.c, 1) = x.m.col(sy * x.w + sx);
        }
      }
    }
  }
}

template <typename S>
void col2im(const Mat<S>& dcol, int c, int h, int w, int k, int stride, int pad,
            FeatureMap<S>& dx) {
  dx = FeatureMap<S>(c, h, w);
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (w + 2 * pad - k) / stride + 1;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      int jo = oy * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= w) continue;
          dx.m.col(sy * w + sx) += dcol.block((ky * k + kx) * c, jo, c, 1);
        }
      }
    }
  }
}

}  // namespace netdetail

template <typename S>
struct Conv2d : Layer<S> {
  int c_in, c_out, k, stride, pad;
  Mat<S> weight;  // c_out x (c_in*k*k)
  Vec<S> bias;
  Mat<S> dweight;
  Vec<S> dbias;
  std::string name;

  // Cached for backward.
  Mat<S> col;
  FeatureMap<S> x_cache;
  int in_h = 0, in_w = 0;

  Conv2d(int ci, int co, int kk, int s, Rng& rng, const std::string& nm)
      : c_in(ci), c_out(co), k(kk), stride(s), pad(kk / 2), name(nm) {
    weight.resize(c_out, c_in * k * k);
    // He initialization keeps activations in range for rectified stacks.
    S scale = S(std::sqrt(2.0 / (double(c_in) * k * k)));
    for (long i = 0; i < weight.size(); ++i) weight.data()[i] = S(rng.normal()) * scale;
    bias = Vec<S>::Zero(c_out);
    dweight = Mat<S>::Zero(c_out, c_in * k * k);
    dbias = Vec<S>::Zero(c_out);
  }

  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    if (x.c != c_in) throw ContractError("conv " + name + ": channel mismatch");
    in_h = x.h;
    in_w = x.w;
    int ho, wo;
    FeatureMap<S> y;
    if (k == 1 && stride == 1) {
      // 1x1 needs no im2col; keep the input for the weight gradient.
      x_cache = x;
      y.c = c_out;
      y.h = x.h;
      y.w = x.w;
      y.m = (weight * x.m).colwise() + bias;
      return y;
    }
    netdetail::im2col(x, k, stride, pad, col, ho, wo);
    y.c = c_out;
    y.h = ho;
    y.w = wo;
    y.m = (weight * col).colwise() + bias;
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    if (k == 1 && stride == 1) {
      dweight += dy.m * x_cache.m.transpose();
      dbias += dy.m.rowwise().sum();
      FeatureMap<S> dx(c_in, in_h, in_w);
      dx.m = weight.transpose() * dy.m;
      return dx;
    }
    dweight += dy.m * col.transpose();
    dbias += dy.m.rowwise().sum();
    Mat<S> dcol = weight.transpose() * dy.m;
    FeatureMap<S> dx;
    netdetail::col2im(dcol, c_in, in_h, in_w, k, stride, pad, dx);
    return dx;
  }

  void collect_params(std::vector<ParamRef<S>>& out) override {
    out.push_back({weight.data(), dweight.data(), weight.size(), name + ".w"});
    out.push_back({bias.data(), dbias.data(), bias.size(), name + ".b"});
  }
};

template <typename S>
struct ReLU : Layer<S> {
  Mat<S> mask;
  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    FeatureMap<S> y = x;
    mask = (x.m.array() > S(0)).template cast<S>();
    y.m = x.m.cwiseProduct(mask);
    return y;
  }
  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dx = dy;
    dx.m = dy.m.cwiseProduct(mask);
    return dx;
  }
};

template <typename S>
struct Tanh : Layer<S> {
  Mat<S> y_cache;
  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    FeatureMap<S> y = x;
    y.m = x.m.array().tanh();
    y_cache = y.m;
    return y;
  }
  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dx = dy;
    dx.m = dy.m.array() * (S(1) - y_cache.array().square());
    return dx;
  }
};

template <typename S>
struct MaxPool : Layer<S> {
  int k, stride, pad;
  std::vector<int> argmax;  // per (channel, out pixel)
  int in_c = 0, in_h = 0, in_w = 0, out_h = 0, out_w = 0;

  MaxPool(int kk, int s, int p) : k(kk), stride(s), pad(p) {}

  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    in_c = x.c;
    in_h = x.h;
    in_w = x.w;
    out_h = (x.h + 2 * pad - k) / stride + 1;
    out_w = (x.w + 2 * pad - k) / stride + 1;
    FeatureMap<S> y(x.c, out_h, out_w);
    argmax.assign(size_t(x.c) * out_h * out_w, -1);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        int jo = oy * out_w + ox;
        for (int c = 0; c < x.c; ++c) {
          S best = std::numeric_limits<S>::lowest();
          int best_j = -1;
          for (int ky = 0; ky < k; ++ky) {
            int sy = oy * stride + ky - pad;
            if (sy < 0 || sy >= x.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int sx = ox * stride + kx - pad;
              if (sx < 0 || sx >= x.w) continue;
              S v = x.m(c, sy * x.w + sx);
              if (v > best) {
                best = v;
                best_j = sy * x.w + sx;
              }
            }
          }
          y.m(c, jo) = best_j >= 0 ? best : S(0);
          argmax[size_t(c) * out_h * out_w + jo] = best_j;
        }
      }
    }
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dx(in_c, in_h, in_w);
    for (int c = 0; c < in_c; ++c) {
      for (int j = 0; j < out_h * out_w; ++j) {
        int src = argmax[size_t(c) * out_h * out_w + j];
        if (src >= 0) dx.m(c, src) += dy.m(c, j);
      }
    }
    return dx;
  }
};

// Squeeze-excitation: global average pool -> bottleneck -> sigmoid gate ->
// channel rescale.
template <typename S>
struct SEBlock : Layer<S> {
  int c, c_mid;
  Mat<S> w1, w2, dw1, dw2;
  Vec<S> b1, b2, db1, db2;
  std::string name;

  FeatureMap<S> x_cache;
  Vec<S> pool, z1, a1, gate;

  SEBlock(int channels, int reduction, Rng& rng, const std::string& nm)
      : c(channels), c_mid(channels / reduction), name(nm) {
    if (reduction > channels) {
      throw ConfigError("se reduction " + std::to_string(reduction) +
                        " exceeds channel count " + std::to_string(channels));
    }
    if (c_mid < 1) c_mid = 1;
    auto init = [&](Mat<S>& w, int rows, int cols) {
      w.resize(rows, cols);
      S scale = S(std::sqrt(2.0 / double(cols)));
      for (long i = 0; i < w.size(); ++i) w.data()[i] = S(rng.normal()) * scale;
    };
    init(w1, c_mid, c);
    init(w2, c, c_mid);
    b1 = Vec<S>::Zero(c_mid);
    b2 = Vec<S>::Zero(c);
    dw1 = Mat<S>::Zero(c_mid, c);
    dw2 = Mat<S>::Zero(c, c_mid);
    db1 = Vec<S>::Zero(c_mid);
    db2 = Vec<S>::Zero(c);
  }

  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    if (x.c != c) throw ContractError("se " + name + ": channel mismatch");
    x_cache = x;
    pool = x.m.rowwise().mean();
    z1 = w1 * pool + b1;
    a1 = z1.cwiseMax(S(0));
    Vec<S> z2 = w2 * a1 + b2;
    gate = (S(1) / (S(1) + (-z2.array()).exp())).matrix();
    FeatureMap<S> y = x;
    y.m = x.m.array().colwise() * gate.array();
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dx = x_cache;
    dx.m = dy.m.array().colwise() * gate.array();
    Vec<S> dgate = (dy.m.array() * x_cache.m.array()).rowwise().sum();
    Vec<S> dz2 = dgate.array() * gate.array() * (S(1) - gate.array());
    dw2 += dz2 * a1.transpose();
    db2 += dz2;
    Vec<S> da1 = w2.transpose() * dz2;
    Vec<S> dz1 = (z1.array() > S(0)).select(da1, Vec<S>::Zero(c_mid));
    dw1 += dz1 * pool.transpose();
    db1 += dz1;
    Vec<S> dpool = w1.transpose() * dz1;
    dx.m.colwise() += dpool * (S(1) / S(x_cache.pixels()));
    return dx;
  }

  void collect_params(std::vector<ParamRef<S>>& out) override {
    out.push_back({w1.data(), dw1.data(), w1.size(), name + ".w1"});
    out.push_back({b1.data(), db1.data(), b1.size(), name + ".b1"});
    out.push_back({w2.data(), dw2.data(), w2.size(), name + ".w2"});
    out.push_back({b2.data(), db2.data(), b2.size(), name + ".b2"});
  }
};

template <typename S>
struct Upsample2 : Layer<S> {
  int in_h = 0, in_w = 0;
  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    in_h = x.h;
    in_w = x.w;
    FeatureMap<S> y(x.c, x.h * 2, x.w * 2);
    for (int j = 0; j < x.pixels(); ++j) {
      int sy = j / x.w, sx = j % x.w;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          y.m.col((sy * 2 + dy) * y.w + (sx * 2 + dx)) = x.m.col(j);
        }
      }
    }
    return y;
  }
  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dx(dy.c, in_h, in_w);
    for (int j = 0; j < in_h * in_w; ++j) {
      int sy = j / in_w, sx = j % in_w;
      for (int ddy = 0; ddy < 2; ++ddy) {
        for (int ddx = 0; ddx < 2; ++ddx) {
          dx.m.col(j) += dy.m.col((sy * 2 + ddy) * dy.w + (sx * 2 + ddx));
        }
      }
    }
    return dx;
  }
};

// Basic residual block: conv-relu-conv plus (projected) skip, then relu.
template <typename S>
struct ResBlock : Layer<S> {
  std::unique_ptr<Conv2d<S>> conv1, conv2, proj;  // proj null for identity skip
  ReLU<S> relu1;
  Mat<S> sum_mask;  // relu gate of the output
  FeatureMap<S> x_cache;

  ResBlock(int c_in, int c_out, int stride, Rng& rng, const std::string& nm) {
    conv1 = std::make_unique<Conv2d<S>>(c_in, c_out, 3, stride, rng, nm + ".conv1");
    conv2 = std::make_unique<Conv2d<S>>(c_out, c_out, 3, 1, rng, nm + ".conv2");
    if (stride != 1 || c_in != c_out) {
      proj = std::make_unique<Conv2d<S>>(c_in, c_out, 1, stride, rng, nm + ".proj");
      // A strided 1x1 still walks im2col; stride forces the general path.
    }
  }

  FeatureMap<S> forward(const FeatureMap<S>& x) override {
    x_cache = x;
    FeatureMap<S> h = conv2->forward(relu1.forward(conv1->forward(x)));
    FeatureMap<S> skip = proj ? proj->forward(x) : x;
    FeatureMap<S> y = h;
    y.m += skip.m;
    sum_mask = (y.m.array() > S(0)).template cast<S>();
    y.m = y.m.cwiseProduct(sum_mask);
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) override {
    FeatureMap<S> dsum = dy;
    dsum.m = dy.m.cwiseProduct(sum_mask);
    FeatureMap<S> dx = conv1->backward(relu1.backward(conv2->backward(dsum)));
    if (proj) {
      FeatureMap<S> dskip = proj->backward(dsum);
      dx.m += dskip.m;
    } else {
      dx.m += dsum.m;
    }
    return dx;
  }

  void collect_params(std::vector<ParamRef<S>>& out) override {
    conv1->collect_params(out);
    conv2->collect_params(out);
    if (proj) proj->collect_params(out);
  }
};

}  // namespace afw
