#pragma once

// Central-difference gradient checking for double-precision graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dctnet/autograd.hpp"

namespace gradcheck {

using dctnet::ag::Graph;
using dctnet::ag::Parameter;
using dctnet::ag::Var;

// Builds a fresh graph over the parameters and returns the scalar loss.
using LossBuilder = std::function<Var(Graph<double>&)>;

struct Result {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps round-off on vanishing
// gradients from reading as a large relative error.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double evaluate(const LossBuilder& build) {
  Graph<double> g;
  return g.value(build(g)).data[0];
}

inline Result check(const std::vector<Parameter<double>*>& params, const LossBuilder& build, double h = 1e-6,
                    double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g;
    g.backward(build(g));
  }
  Result r;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = evaluate(build);
      p->value[i] = saved - h;
      const double down = evaluate(build);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double e = relative_error(p->grad[i], numeric, floor);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(p->grad[i]) + " numeric " +
                  std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gradcheck
