#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace welfare::nn {

// One sample, channel-major (C x H x W).
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t size() const { return v.size(); }
  float* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * h * w; }
  const float* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * h * w; }
  float& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::string n = {}, std::size_t size = 0) : name(std::move(n)), value(size, 0.0f), grad(size, 0.0f) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

}  // namespace welfare::nn
