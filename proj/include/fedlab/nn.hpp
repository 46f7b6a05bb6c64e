// fedlab/nn.hpp - minimal float32 NN engine with manual backprop.
//
// Just enough machinery for desk-scale federated experiments: 3x3 conv,
// 2x2 max-pool, linear, relu/tanh/sigmoid, softmax cross-entropy and plain
// SGD. GEMMs go through Eigen; everything runs single-threaded with a fixed
// reduction order, so results are reproducible bit-for-bit on one platform.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

namespace fedlab::nn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> w, g;

  Param() = default;
  Param(std::string n, std::vector<int> s)
      : name(std::move(n)), shape(std::move(s)), w(Tensor::numel_of(shape), 0.0f),
        g(Tensor::numel_of(shape), 0.0f) {}
  std::size_t numel() const { return w.size(); }
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual torch-style default.
inline void init_uniform(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : p.w) v = float(rng.uniform(-bound, bound));
}

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

class Linear final : public Layer {
 public:
  Param weight, bias;  // weight: (out, in)

  Linear(const std::string& name, int in, int out, Rng& rng)
      : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {
    init_uniform(weight, in, rng);
    init_uniform(bias, in, rng);
  }

  Tensor forward(const Tensor& x, bool train) override {
    if (x.shape.size() != 2 || x.shape[1] != in_)
      throw std::invalid_argument(weight.name + ": bad input shape");
    const int N = x.shape[0];
    if (train) x_ = x;
    Tensor y({N, out_});
    MapC X(x.data(), N, in_), W(weight.w.data(), out_, in_);
    MapM Y(y.data(), N, out_);
    Y.noalias() = X * W.transpose();
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < out_; ++o) y.v[std::size_t(n) * out_ + o] += bias.w[o];
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const int N = dy.shape[0];
    MapC dY(dy.data(), N, out_), X(x_.data(), N, in_), W(weight.w.data(), out_, in_);
    MapM dW(weight.g.data(), out_, in_);
    dW.noalias() += dY.transpose() * X;
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < out_; ++o) bias.g[o] += dy.v[std::size_t(n) * out_ + o];
    Tensor dx({N, in_});
    MapM dX(dx.data(), N, in_);
    dX.noalias() = dY * W;
    return dx;
  }

  std::vector<Param*> params() override { return {&weight, &bias}; }

 private:
  int in_, out_;
  Tensor x_;
};

// 3x3 convolution, stride 1, zero padding 1 (shape preserving), via im2col.
class Conv2d final : public Layer {
 public:
  Param weight, bias;  // weight: (cout, cin, 3, 3)

  Conv2d(const std::string& name, int cin, int cout, Rng& rng)
      : weight(name + ".weight", {cout, cin, 3, 3}), bias(name + ".bias", {cout}),
        cin_(cin), cout_(cout) {
    init_uniform(weight, cin * 9, rng);
    init_uniform(bias, cin * 9, rng);
  }

  Tensor forward(const Tensor& x, bool train) override {
    if (x.shape.size() != 4 || x.shape[1] != cin_)
      throw std::invalid_argument(weight.name + ": bad input shape");
    const int N = x.shape[0], H = x.shape[2], W = x.shape[3];
    h_ = H;
    w_ = W;
    const int hw = H * W, k = cin_ * 9;
    Tensor y({N, cout_, H, W});
    if (train) cols_.assign(std::size_t(N) * k * hw, 0.0f);
    std::vector<float> scratch;
    if (!train) scratch.assign(std::size_t(k) * hw, 0.0f);
    for (int n = 0; n < N; ++n) {
      float* col = train ? cols_.data() + std::size_t(n) * k * hw : scratch.data();
      im2col(x.data() + std::size_t(n) * cin_ * hw, H, W, col);
      MapC Wm(weight.w.data(), cout_, k), Cm(col, k, hw);
      MapM Ym(y.data() + std::size_t(n) * cout_ * hw, cout_, hw);
      Ym.noalias() = Wm * Cm;
      for (int co = 0; co < cout_; ++co)
        Ym.row(co).array() += bias.w[co];
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const int N = dy.shape[0], H = h_, W = w_;
    const int hw = H * W, k = cin_ * 9;
    Tensor dx({N, cin_, H, W});
    std::vector<float> dcol(std::size_t(k) * hw);
    for (int n = 0; n < N; ++n) {
      const float* col = cols_.data() + std::size_t(n) * k * hw;
      MapC dY(dy.data() + std::size_t(n) * cout_ * hw, cout_, hw), Cm(col, k, hw),
          Wm(weight.w.data(), cout_, k);
      MapM dW(weight.g.data(), cout_, k), dC(dcol.data(), k, hw);
      dW.noalias() += dY * Cm.transpose();
      // fixed-order accumulation: Eigen's vectorized sum() peels to the runtime
      // pointer alignment, which makes results depend on heap addresses
      for (int co = 0; co < cout_; ++co) {
        const float* row = dy.data() + (std::size_t(n) * cout_ + co) * hw;
        double acc = 0.0;
        for (int j = 0; j < hw; ++j) acc += double(row[j]);
        bias.g[co] += float(acc);
      }
      dC.noalias() = Wm.transpose() * dY;
      col2im(dcol.data(), H, W, dx.data() + std::size_t(n) * cin_ * hw);
    }
    return dx;
  }

  std::vector<Param*> params() override { return {&weight, &bias}; }

 private:
  void im2col(const float* x, int H, int W, float* col) const {
    // col layout: row = (ci*9 + ky*3 + kx), column = output pixel (y*W + x)
    for (int ci = 0; ci < cin_; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          float* dst = col + (std::size_t(ci) * 9 + ky * 3 + kx) * H * W;
          for (int oy = 0; oy < H; ++oy) {
            const int iy = oy + ky - 1;
            if (iy < 0 || iy >= H) {
              for (int ox = 0; ox < W; ++ox) dst[oy * W + ox] = 0.0f;
              continue;
            }
            const float* src = x + (std::size_t(ci) * H + iy) * W;
            for (int ox = 0; ox < W; ++ox) {
              const int ix = ox + kx - 1;
              dst[oy * W + ox] = (ix < 0 || ix >= W) ? 0.0f : src[ix];
            }
          }
        }
  }

  void col2im(const float* col, int H, int W, float* dx) const {
    for (std::size_t i = 0, n = std::size_t(cin_) * H * W; i < n; ++i) dx[i] = 0.0f;
    for (int ci = 0; ci < cin_; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const float* src = col + (std::size_t(ci) * 9 + ky * 3 + kx) * H * W;
          for (int oy = 0; oy < H; ++oy) {
            const int iy = oy + ky - 1;
            if (iy < 0 || iy >= H) continue;
            float* dst = dx + (std::size_t(ci) * H + iy) * W;
            for (int ox = 0; ox < W; ++ox) {
              const int ix = ox + kx - 1;
              if (ix >= 0 && ix < W) dst[ix] += src[oy * W + ox];
            }
          }
        }
  }

  int cin_, cout_, h_ = 0, w_ = 0;
  std::vector<float> cols_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
    if (train) mask_ = x;
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      if (mask_.v[i] <= 0.0f) dx.v[i] = 0.0f;
    return dx;
  }

 private:
  Tensor mask_;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (auto& v : y.v) v = std::tanh(v);
    if (train) y_ = y;
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= 1.0f - y_.v[i] * y_.v[i];
    return dx;
  }

 private:
  Tensor y_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (auto& v : y.v) v = 1.0f / (1.0f + std::exp(-v));
    if (train) y_ = y;
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= y_.v[i] * (1.0f - y_.v[i]);
    return dx;
  }

 private:
  Tensor y_;
};

class MaxPool2 final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (H % 2 || W % 2) throw std::invalid_argument("maxpool: odd spatial dims");
    in_shape_ = x.shape;
    Tensor y({N, C, H / 2, W / 2});
    arg_.assign(y.v.size(), 0);
    std::size_t o = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < H / 2; ++oy)
          for (int ox = 0; ox < W / 2; ++ox, ++o) {
            std::size_t base = ((std::size_t(n) * C + c) * H + oy * 2) * W + ox * 2;
            std::size_t best = base;
            float bv = x.v[base];
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                std::size_t idx = base + std::size_t(dy) * W + dx;
                if (x.v[idx] > bv) {  // first maximum wins on ties
                  bv = x.v[idx];
                  best = idx;
                }
              }
            y.v[o] = bv;
            if (train) arg_[o] = best;
          }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(in_shape_);
    for (std::size_t o = 0; o < dy.v.size(); ++o) dx.v[arg_[o]] += dy.v[o];
    return dx;
  }

 private:
  std::vector<int> in_shape_;
  std::vector<std::size_t> arg_;
};

class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    (void)train;
    in_shape_ = x.shape;
    Tensor y = x;
    y.shape = {x.shape[0], int(x.numel()) / x.shape[0]};
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.shape = in_shape_;
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, train);
    return h;
  }

  Tensor backward(const Tensor& dy) {
    Tensor g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
      for (Param* p : l->params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (Param* p : params()) std::fill(p->g.begin(), p->g.end(), 0.0f);
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

inline std::size_t param_count(Sequential& m) {
  std::size_t n = 0;
  for (Param* p : m.params()) n += p->numel();
  return n;
}

// ===== Losses ================================================================

class SoftmaxCrossEntropy {
 public:
  // Returns (mean loss, d loss / d logits).
  std::pair<double, Tensor> loss_and_grad(const Tensor& logits,
                                          const std::vector<int>& labels) const {
    const int N = logits.shape[0], K = logits.shape[1];
    if (int(labels.size()) != N) throw std::invalid_argument("cross-entropy: label count");
    Tensor grad({N, K});
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
      const float* row = logits.data() + std::size_t(n) * K;
      float mx = row[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += std::exp(double(row[k] - mx));
      loss += std::log(z) - double(row[labels[n]] - mx);
      for (int k = 0; k < K; ++k) {
        double p = std::exp(double(row[k] - mx)) / z;
        grad.v[std::size_t(n) * K + k] = float((p - (k == labels[n] ? 1.0 : 0.0)) / N);
      }
    }
    return {loss / N, std::move(grad)};
  }
};

// Mean absolute error plus mean squared error over all elements.
inline std::pair<double, Tensor> l1l2_loss_and_grad(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) throw std::invalid_argument("l1l2: shape mismatch");
  const double M = double(pred.numel());
  Tensor grad(pred.shape);
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    double d = double(pred.v[i]) - double(target.v[i]);
    l1 += std::abs(d);
    l2 += d * d;
    grad.v[i] = float(((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) + 2.0 * d) / M);
  }
  return {l1 / M + l2 / M, std::move(grad)};
}

inline double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.shape[0], K = logits.shape[1];
  int hit = 0;
  for (int n = 0; n < N; ++n) {
    const float* row = logits.data() + std::size_t(n) * K;
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;
    hit += (best == labels[n]);
  }
  return double(hit) / N;
}

// ===== Optimizer =============================================================

// Plain SGD, classic coupled L2 weight decay.
struct Sgd {
  float lr;
  float weight_decay;

  Sgd(float lr_, float wd) : lr(lr_), weight_decay(wd) {}

  void step(const std::vector<Param*>& params) const {
    for (Param* p : params)
      for (std::size_t i = 0; i < p->w.size(); ++i)
        p->w[i] -= lr * (p->g[i] + weight_decay * p->w[i]);
  }
};

// ===== Model builder =========================================================

struct ModelSpec {
  std::string preset = "cnn";     // "cnn" or "mlp"
  int in_ch = 3, in_h = 32, in_w = 32;
  int classes = 4;
  std::vector<int> conv_channels = {24, 48};  // one 2x2 pool after each conv
  std::vector<int> fc_hidden = {400};
};

inline Sequential build_model(const ModelSpec& spec, Rng& rng) {
  Sequential m;
  int h = spec.in_h, w = spec.in_w, feat;
  if (spec.preset == "cnn") {
    int cin = spec.in_ch;
    for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
      int cout = spec.conv_channels[i];
      m.add(std::make_unique<Conv2d>("conv" + std::to_string(i + 1), cin, cout, rng));
      m.add(std::make_unique<ReLU>());
      m.add(std::make_unique<MaxPool2>());
      if (h % 2 || w % 2) throw std::invalid_argument("model: input not pool-divisible");
      h /= 2;
      w /= 2;
      cin = cout;
    }
    m.add(std::make_unique<Flatten>());
    feat = cin * h * w;
  } else if (spec.preset == "mlp") {
    m.add(std::make_unique<Flatten>());
    feat = spec.in_ch * spec.in_h * spec.in_w;
  } else {
    throw std::invalid_argument("model: unknown preset " + spec.preset);
  }
  for (std::size_t i = 0; i < spec.fc_hidden.size(); ++i) {
    m.add(std::make_unique<Linear>("fc" + std::to_string(i + 1), feat, spec.fc_hidden[i], rng));
    m.add(std::make_unique<ReLU>());
    feat = spec.fc_hidden[i];
  }
  m.add(std::make_unique<Linear>("out", feat, spec.classes, rng));
  return m;
}

// Fully connected net for the memory task: hidden relu/tanh stack with a
// sigmoid-bounded output.
inline Sequential build_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                            const std::string& activation, Rng& rng) {
  Sequential m;
  int in = input_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    m.add(std::make_unique<Linear>("fc" + std::to_string(i + 1), in, hidden[i], rng));
    if (activation == "relu")
      m.add(std::make_unique<ReLU>());
    else if (activation == "tanh")
      m.add(std::make_unique<Tanh>());
    else
      throw std::invalid_argument("mlp: unknown activation " + activation);
    in = hidden[i];
  }
  m.add(std::make_unique<Linear>("out", in, output_dim, rng));
  m.add(std::make_unique<Sigmoid>());
  return m;
}

}  // namespace fedlab::nn
