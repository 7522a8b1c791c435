#pragma once

// Minimal layer set for a small residual CNN. Layers process one sample at
// a time and cache what backward() needs; gradients accumulate into Param
// until the optimizer consumes them.

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "welfare/error.hpp"
#include "welfare/nn/tensor.hpp"

namespace welfare::nn {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<Param*>&) {}
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in, int out, int kernel, int stride, int pad)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", static_cast<std::size_t>(out) * in * kernel * kernel),
        bias_(name + ".bias", static_cast<std::size_t>(out)) {}

  void init_he(std::mt19937_64& rng, float gain = 1.0f) {
    std::normal_distribution<float> dist(0.0f, gain * std::sqrt(2.0f / static_cast<float>(in_ * k_ * k_)));
    for (auto& w : weight_.value) w = dist(rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
  }
  void init_zero() {
    std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
  }

  Tensor forward(const Tensor& x) override {
    if (x.c != in_) throw PreconditionError("conv: channel mismatch");
    in_h_ = x.h;
    in_w_ = x.w;
    oh_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
    im2col(x);
    Tensor y(out_, oh_, ow_);
    const int K = in_ * k_ * k_;
    const int P = oh_ * ow_;
    MatMap Y(y.v.data(), out_, P);
    Y.noalias() = ConstMatMap(weight_.value.data(), out_, K) * ConstMatMap(col_.data(), K, P);
    for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[o];
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const int K = in_ * k_ * k_;
    const int P = oh_ * ow_;
    ConstMatMap G(g.v.data(), out_, P);
    ConstMatMap C(col_.data(), K, P);
    MatMap(weight_.grad.data(), out_, K).noalias() += G * C.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[o] += G.row(o).sum();
    dcol_.resize(static_cast<std::size_t>(K) * P);
    MatMap(dcol_.data(), K, P).noalias() = ConstMatMap(weight_.value.data(), out_, K).transpose() * G;
    return col2im();
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  void im2col(const Tensor& x) {
    const int P = oh_ * ow_;
    col_.assign(static_cast<std::size_t>(in_) * k_ * k_ * P, 0.0f);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          float* row = col_.data() + (static_cast<std::size_t>((c * k_ + ky) * k_ + kx)) * P;
          for (int oy = 0; oy < oh_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            for (int ox = 0; ox < ow_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) row[oy * ow_ + ox] = x.at(c, iy, ix);
            }
          }
        }
  }

  Tensor col2im() const {
    Tensor dx(in_, in_h_, in_w_);
    const int P = oh_ * ow_;
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const float* row = dcol_.data() + (static_cast<std::size_t>((c * k_ + ky) * k_ + kx)) * P;
          for (int oy = 0; oy < oh_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            for (int ox = 0; ox < ow_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) dx.at(c, iy, ix) += row[oy * ow_ + ox];
            }
          }
        }
    return dx;
  }

  int in_, out_, k_, stride_, pad_;
  Param weight_, bias_;
  int in_h_ = 0, in_w_ = 0, oh_ = 0, ow_ = 0;
  std::vector<float> col_, dcol_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x) override {
    Tensor y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.v[i] > 0)
        mask_[i] = 1;
      else
        y.v[i] = 0;
    }
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!mask_[i]) dx.v[i] = 0;
    return dx;
  }

 private:
  std::vector<unsigned char> mask_;
};

// Non-overlapping average pooling with window k (trailing rows/cols dropped).
class AvgPool : public Layer {
 public:
  explicit AvgPool(int k) : k_(k) {}

  Tensor forward(const Tensor& x) override {
    in_c_ = x.c;
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor y(x.c, x.h / k_, x.w / k_);
    const float inv = 1.0f / static_cast<float>(k_ * k_);
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          float s = 0;
          for (int dy = 0; dy < k_; ++dy)
            for (int dx = 0; dx < k_; ++dx) s += x.at(c, oy * k_ + dy, ox * k_ + dx);
          y.at(c, oy, ox) = s * inv;
        }
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor dx(in_c_, in_h_, in_w_);
    const float inv = 1.0f / static_cast<float>(k_ * k_);
    for (int c = 0; c < g.c; ++c)
      for (int oy = 0; oy < g.h; ++oy)
        for (int ox = 0; ox < g.w; ++ox)
          for (int dy = 0; dy < k_; ++dy)
            for (int ddx = 0; ddx < k_; ++ddx) dx.at(c, oy * k_ + dy, ox * k_ + ddx) = g.at(c, oy, ox) * inv;
    return dx;
  }

 private:
  int k_;
  int in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x) override {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor y(x.c, 1, 1);
    const float inv = 1.0f / static_cast<float>(x.h * x.w);
    for (int c = 0; c < x.c; ++c) {
      const float* p = x.plane(c);
      float s = 0;
      for (int i = 0; i < x.h * x.w; ++i) s += p[i];
      y.v[c] = s * inv;
    }
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor dx(g.c, in_h_, in_w_);
    const float inv = 1.0f / static_cast<float>(in_h_ * in_w_);
    for (int c = 0; c < g.c; ++c) std::fill(dx.plane(c), dx.plane(c) + in_h_ * in_w_, g.v[c] * inv);
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

class Linear : public Layer {
 public:
  Linear(std::string name, int in, int out)
      : in_(in), out_(out), weight_(name + ".weight", static_cast<std::size_t>(in) * out),
        bias_(name + ".bias", static_cast<std::size_t>(out)) {}

  void init(std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(1.0f / static_cast<float>(in_)));
    for (auto& w : weight_.value) w = dist(rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
  }

  Tensor forward(const Tensor& x) override {
    if (static_cast<int>(x.size()) != in_) throw PreconditionError("linear: input size mismatch");
    x_ = x.v;
    Tensor y(out_, 1, 1);
    Eigen::Map<Eigen::VectorXf>(y.v.data(), out_).noalias() =
        ConstMatMap(weight_.value.data(), out_, in_) * Eigen::Map<const Eigen::VectorXf>(x_.data(), in_) +
        Eigen::Map<const Eigen::VectorXf>(bias_.value.data(), out_);
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Eigen::Map<const Eigen::VectorXf> G(g.v.data(), out_);
    Eigen::Map<const Eigen::VectorXf> X(x_.data(), in_);
    MatMap(weight_.grad.data(), out_, in_).noalias() += G * X.transpose();
    Eigen::Map<Eigen::VectorXf>(bias_.grad.data(), out_) += G;
    Tensor dx(in_, 1, 1);
    Eigen::Map<Eigen::VectorXf>(dx.v.data(), in_).noalias() = ConstMatMap(weight_.value.data(), out_, in_).transpose() * G;
    return dx;
  }
  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_, out_;
  Param weight_, bias_;
  std::vector<float> x_;
};

// conv-relu-conv plus identity (or 1x1 projection) shortcut, then relu.
// The second conv starts at zero so a fresh block is the identity map.
class BasicBlock : public Layer {
 public:
  BasicBlock(const std::string& name, int in, int out, int stride, std::mt19937_64& rng)
      : conv1_(name + ".conv1", in, out, 3, stride, 1), conv2_(name + ".conv2", out, out, 3, 1, 1) {
    conv1_.init_he(rng);
    conv2_.init_zero();
    if (in != out || stride != 1) {
      proj_ = std::make_unique<Conv2d>(name + ".proj", in, out, 1, stride, 0);
      proj_->init_he(rng);
    }
  }

  Tensor forward(const Tensor& x) override {
    Tensor y = conv2_.forward(relu1_.forward(conv1_.forward(x)));
    const Tensor skip = proj_ ? proj_->forward(x) : x;
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += skip.v[i];
    return relu_out_.forward(y);
  }

  Tensor backward(const Tensor& g) override {
    const Tensor gy = relu_out_.backward(g);
    Tensor dx = conv1_.backward(relu1_.backward(conv2_.backward(gy)));
    const Tensor dskip = proj_ ? proj_->backward(gy) : gy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += dskip.v[i];
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    conv1_.collect_params(out);
    conv2_.collect_params(out);
    if (proj_) proj_->collect_params(out);
  }

 private:
  Conv2d conv1_, conv2_;
  ReLU relu1_, relu_out_;
  std::unique_ptr<Conv2d> proj_;
};

}  // namespace welfare::nn
