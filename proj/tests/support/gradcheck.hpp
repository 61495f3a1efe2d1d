#pragma once

// Finite-difference gradient oracle shared by the test suites. Central
// differences (step 1e-5 by default) against a loss rebuilt from scratch at
// every probe, so the analytic path under test is never reused.

#include <cmath>
#include <functional>
#include <vector>

#include "bifleet/tape.hpp"
#include "bifleet/tensor.hpp"

namespace bifleet::testing {

// Builds a scalar loss from freshly created input leaves bound to `leaves`.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  int64_t worst_leaf = -1;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline double eval_loss(std::vector<Tensor>& leaves, const LossBuilder& build) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (auto& t : leaves) vars.push_back(tape.input(t));
  return tape.val(build(tape, vars)).item();
}

inline GradCheck gradcheck(std::vector<Tensor> leaves, const LossBuilder& build,
                           double eps = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (auto& t : leaves) vars.push_back(tape.input(t));
  Var loss = build(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(vars.size());
  for (Var v : vars) analytic.push_back(tape.grad(v));

  GradCheck result;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (int64_t k = 0; k < leaves[li].numel(); ++k) {
      const double saved = leaves[li][k];
      leaves[li][k] = saved + eps;
      const double up = eval_loss(leaves, build);
      leaves[li][k] = saved - eps;
      const double down = eval_loss(leaves, build);
      leaves[li][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = rel_err(analytic[li][k], numeric);
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst_leaf = static_cast<int64_t>(li);
        result.worst_index = k;
        result.analytic = analytic[li][k];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace bifleet::testing
