#pragma once

#include <cmath>
#include <map>
#include <string>

#include "ocf/core/nn.hpp"
#include "ocf/core/tensor.hpp"

namespace ocf {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a named parameter set. One instance per game player so that the
// min- and max-player states stay independent.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  int64_t step_count() const { return t_; }

  // Descent step using each parameter's accumulated grad, scaled by
  // grad_sign (-1 flips the player to ascent). Grads are left untouched.
  void step(const ParamMap& params, double grad_sign = 1.0) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : params) {
      State& st = state_[name];
      if (st.m.empty()) {
        st.m = Tensor(p->value.shape());
        st.v = Tensor(p->value.shape());
      }
      const bool has_grad = !p->grad.empty();
      for (int64_t i = 0; i < p->value.size(); ++i) {
        double g = has_grad ? grad_sign * p->grad[i] : 0.0;
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = st.m[i] / bc1;
        double vhat = st.v[i] / bc2;
        p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  // Checkpoint plumbing: moment tensors keyed by parameter name.
  void export_state(std::map<std::string, Tensor>& out, const std::string& prefix) const {
    for (const auto& [name, st] : state_) {
      out[prefix + name + "/m"] = st.m;
      out[prefix + name + "/v"] = st.v;
    }
  }
  void import_state(const std::map<std::string, Tensor>& in, const std::string& prefix,
                    int64_t t) {
    t_ = t;
    state_.clear();
    for (const auto& [key, tensor] : in) {
      if (key.rfind(prefix, 0) != 0) continue;
      std::string rest = key.substr(prefix.size());
      if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, "/m") == 0)
        state_[rest.substr(0, rest.size() - 2)].m = tensor;
      else if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, "/v") == 0)
        state_[rest.substr(0, rest.size() - 2)].v = tensor;
    }
  }

 private:
  struct State {
    Tensor m, v;
  };
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace ocf
