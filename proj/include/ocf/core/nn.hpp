#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ocf/core/autodiff.hpp"
#include "ocf/core/rng.hpp"
#include "ocf/core/tensor.hpp"

namespace ocf {

// Ordered name -> parameter-node map. Checkpoints and optimizers iterate it
// in a fixed (lexicographic) order, which keeps updates deterministic.
using ParamMap = std::map<std::string, NodePtr>;

inline std::vector<NodePtr> param_list(const ParamMap& m) {
  std::vector<NodePtr> out;
  out.reserve(m.size());
  for (const auto& [name, p] : m) out.push_back(p);
  return out;
}

inline void zero_grads(const ParamMap& m) {
  for (const auto& [name, p] : m)
    if (!p->grad.empty()) p->grad.zero();
}

inline int64_t param_count(const ParamMap& m) {
  int64_t n = 0;
  for (const auto& [name, p] : m) n += p->value.size();
  return n;
}

// Fan-in scaled He initialization.
inline Tensor he_init(Shape shape, int64_t fan_in, Rng& rng, double gain = 2.0) {
  Tensor t(std::move(shape));
  double std = std::sqrt(gain / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
  return t;
}

struct Conv2dLayer {
  NodePtr w, b;
  int stride = 1, pad = 1, dil = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, Rng& rng, int stride_ = 1, int dil_ = 1, double gain = 2.0)
      : stride(stride_), dil(dil_) {
    pad = dil_ * (k - 1) / 2;  // "same" padding for odd k
    w = parameter(he_init(Shape{cout, cin, k, k}, static_cast<int64_t>(cin) * k * k, rng, gain));
    b = parameter(Tensor(Shape{cout}));
  }

  NodePtr operator()(NodePtr x) const { return conv2d(x, w, b, stride, pad, dil); }

  void collect(ParamMap& m, const std::string& prefix) const {
    m[prefix + ".w"] = w;
    m[prefix + ".b"] = b;
  }
};

struct DenseLayer {
  NodePtr w, b;

  DenseLayer() = default;
  DenseLayer(int din, int dout, Rng& rng, double gain = 2.0) {
    w = parameter(he_init(Shape{dout, din}, din, rng, gain));
    b = parameter(Tensor(Shape{dout}));
  }

  NodePtr operator()(NodePtr x) const { return dense(x, w, b); }

  void collect(ParamMap& m, const std::string& prefix) const {
    m[prefix + ".w"] = w;
    m[prefix + ".b"] = b;
  }
};

// Two channels of normalized pixel-centre coordinates in [-1,1], appended to
// spatially broadcast latents.
inline Tensor coord_channels(int h, int w) {
  Tensor t(Shape{2, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      t.at(0, i, j) = h > 1 ? -1.0 + 2.0 * i / (h - 1) : 0.0;
      t.at(1, i, j) = w > 1 ? -1.0 + 2.0 * j / (w - 1) : 0.0;
    }
  return t;
}

}  // namespace ocf
