#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eyesim/ops.hpp"

namespace eyesim {

// Double-precision central differences against tape gradients. The builder
// gets leaf vars in the order of `inputs` and must return a scalar var.
struct FiniteDiffReport {
  struct PerInput {
    std::string name;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  std::vector<PerInput> inputs;
  double max_rel_err = 0.0;

  bool within(double tol) const { return max_rel_err <= tol; }
  // Elements exceeding tol; the caller decides whether a kink is expected
  // there (lrelu/abs at 0) or the gradient is genuinely wrong.
  std::vector<std::string> flagged(double tol) const {
    std::vector<std::string> out;
    for (const auto& pi : inputs)
      if (pi.max_rel_err > tol) out.push_back(pi.name);
    return out;
  }
};

using GradBuilder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline FiniteDiffReport finite_diff_check(std::vector<std::pair<std::string, Tensor<double>>> inputs,
                                          const GradBuilder& build, double h = 1e-4,
                                          const std::vector<bool>& differentiable = {}) {
  FiniteDiffReport report;
  // analytic pass
  std::vector<Tensor<double>> analytic(inputs.size());
  {
    Tape<double> tp;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (auto& [name, t] : inputs) vars.push_back(tp.leaf(t, true));
    Var loss = build(tp, vars);
    require_dim(tp.val(loss).numel() == 1, "finite_diff_check: builder must return a scalar");
    tp.backward(loss);
    for (size_t k = 0; k < inputs.size(); ++k)
      analytic[k] = tp.has_grad(vars[k]) ? tp.grad(vars[k]) : Tensor<double>::zeros(inputs[k].second.shape);
  }
  auto eval = [&](const std::vector<Tensor<double>>& vals) {
    Tape<double> tp;
    std::vector<Var> vars;
    vars.reserve(vals.size());
    for (const auto& t : vals) vars.push_back(tp.leaf(t, false));
    return tp.val(build(tp, vars))[0];
  };
  std::vector<Tensor<double>> vals;
  vals.reserve(inputs.size());
  for (auto& [name, t] : inputs) vals.push_back(t);
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (!differentiable.empty() && !differentiable[k]) continue;
    FiniteDiffReport::PerInput pi;
    pi.name = inputs[k].first;
    Tensor<double>& t = vals[k];
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + h;
      const double fp = eval(vals);
      t[i] = x0 - h;
      const double fm = eval(vals);
      t[i] = x0;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[k][i];
      const double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      if (rel > pi.max_rel_err) {
        pi.max_rel_err = rel;
        pi.worst_index = i;
        pi.analytic = ana;
        pi.numeric = num;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, pi.max_rel_err);
    report.inputs.push_back(pi);
  }
  return report;
}

}  // namespace eyesim
