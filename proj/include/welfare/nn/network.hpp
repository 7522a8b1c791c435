#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "welfare/error.hpp"
#include "welfare/nn/layers.hpp"
#include "welfare/nn/tensor.hpp"

namespace welfare::nn {

// Architecture identity. Two networks built from equal specs have the same
// parameter layout.
struct ArchSpec {
  std::string backbone_id = "resnet-mini";
  int input_px = 224;
  int outputs = 1;

  bool operator==(const ArchSpec&) const = default;
};

inline constexpr int kMaxWorkingPx = 64;

inline std::vector<int> backbone_widths(const std::string& backbone_id) {
  if (backbone_id == "resnet-mini") return {16, 32, 64};
  if (backbone_id == "resnet-small") return {32, 64, 128};
  throw PreconditionError("unknown backbone '" + backbone_id + "' (expected resnet-mini or resnet-small)");
}

// Input reduction applied before the stem so the working resolution stays
// at or below kMaxWorkingPx.
inline int input_pool_factor(int input_px) {
  return input_px <= kMaxWorkingPx ? 1 : (input_px + kMaxWorkingPx - 1) / kMaxWorkingPx;
}

class Network {
 public:
  Network(const ArchSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.input_px < 8) throw PreconditionError("input_px must be at least 8");
    if (spec.outputs < 1) throw PreconditionError("network needs at least one output");
    const auto widths = backbone_widths(spec.backbone_id);
    std::mt19937_64 rng(seed);
    if (const int k = input_pool_factor(spec.input_px); k > 1) layers_.push_back(std::make_unique<AvgPool>(k));
    auto stem = std::make_unique<Conv2d>("stem", 3, widths[0], 3, 1, 1);
    stem->init_he(rng);
    layers_.push_back(std::move(stem));
    layers_.push_back(std::make_unique<ReLU>());
    layers_.push_back(std::make_unique<BasicBlock>("block1", widths[0], widths[0], 1, rng));
    layers_.push_back(std::make_unique<BasicBlock>("block2", widths[0], widths[1], 2, rng));
    layers_.push_back(std::make_unique<BasicBlock>("block3", widths[1], widths[2], 2, rng));
    layers_.push_back(std::make_unique<GlobalAvgPool>());
    auto head = std::make_unique<Linear>("head", widths[2], spec.outputs);
    head->init(rng);
    layers_.push_back(std::move(head));
    for (auto& l : layers_) l->collect_params(params_);
  }

  const ArchSpec& spec() const { return spec_; }

  Tensor forward(const Tensor& x) {
    Tensor y = x;
    for (auto& l : layers_) y = l->forward(y);
    return y;
  }

  void backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  }

  std::vector<Param*>& params() { return params_; }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params_) n += p->value.size();
    return n;
  }

  std::vector<float> flat_weights() const {
    std::vector<float> out;
    out.reserve(parameter_count());
    for (const auto* p : params_) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
  }

  void load_flat_weights(const std::vector<float>& w) {
    if (w.size() != parameter_count()) throw IntegrityError("weight blob does not match the architecture");
    std::size_t off = 0;
    for (auto* p : params_) {
      std::copy(w.begin() + static_cast<std::ptrdiff_t>(off),
                w.begin() + static_cast<std::ptrdiff_t>(off + p->value.size()), p->value.begin());
      off += p->value.size();
    }
  }

  /// Copies every parameter except the head from `donor` when names and
  /// sizes line up. Returns how many tensors were transferred.
  std::size_t load_backbone_from(const std::map<std::string, std::vector<float>>& donor) {
    std::size_t n = 0;
    for (auto* p : params_) {
      if (p->name.starts_with("head.")) continue;
      auto it = donor.find(p->name);
      if (it == donor.end() || it->second.size() != p->value.size()) continue;
      p->value = it->second;
      ++n;
    }
    return n;
  }

  std::map<std::string, std::vector<float>> named_weights() const {
    std::map<std::string, std::vector<float>> out;
    for (const auto* p : params_) out[p->name] = p->value;
    return out;
  }

 private:
  ArchSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Param*> params_;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8,
       double weight_decay = 0.0)
      : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }

  // Gradients are divided by `scale` (the batch size) before the update.
  void step(double lr, double scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j] / scale;
        m[j] = static_cast<float>(b1_ * m[j] + (1 - b1_) * g);
        v[j] = static_cast<float>(b2_ * v[j] + (1 - b2_) * g * g);
        const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        p.value[j] = static_cast<float>(p.value[j] * (1.0 - lr * wd_) - lr * update);
      }
    }
  }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  double b1_, b2_, eps_, wd_;
  long t_ = 0;
};

// One-cycle schedule: cosine warm-up from max/div to max over the first
// pct_start of steps, then cosine decay to max/(div*final_div).
struct OneCycle {
  double max_lr = 1e-3;
  long total_steps = 1;
  double pct_start = 0.25;
  double div = 25.0;
  double final_div = 1e4;

  double at(long step) const {
    const double start = max_lr / div;
    const double end = start / final_div;
    const long warm = std::max<long>(1, static_cast<long>(std::llround(pct_start * static_cast<double>(total_steps))));
    auto cos_interp = [](double a, double b, double frac) { return b + (a - b) * (1 + std::cos(M_PI * frac)) / 2; };
    if (step < warm) return cos_interp(start, max_lr, static_cast<double>(step) / warm);
    const long rest = std::max<long>(1, total_steps - warm);
    return cos_interp(max_lr, end, std::min(1.0, static_cast<double>(step - warm) / rest));
  }
};

}  // namespace welfare::nn
