#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dctnet/autograd.hpp"
#include "dctnet/error.hpp"

namespace dctnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update of every parameter from its `grad`.
template <class T>
void adam_step(std::span<ag::Parameter<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0) || !(cfg.beta1 > 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 > 0.0 && cfg.beta2 < 1.0))
    throw InvalidInput("invalid Adam hyperparameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T(0));
      state.v.emplace_back(p.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw InvalidInput("optimizer state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (state.m[k].size() != params[k].size() || state.v[k].size() != params[k].size() ||
        params[k].grad.size() != params[k].size())
      throw InvalidInput("optimizer state shape mismatch for " + params[k].name);

  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double m_hat = double(m[i]) / c1;
      const double v_hat = double(v[i]) / c2;
      p.value[i] = static_cast<T>(double(p.value[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

}  // namespace dctnet
