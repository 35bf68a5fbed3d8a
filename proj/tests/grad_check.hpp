#pragma once

// Central finite-difference oracle used by the gradient tests. Lives in test
// code only; it never touches the reverse-mode path it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "deepicp/autodiff.hpp"

namespace gradcheck {

// f maps a flat parameter vector to a scalar, evaluated without any tape.
// Returns max over coordinates of |analytic - central difference| /
// max(|analytic|, floor).
inline double max_relative_error(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x,
                                 const std::vector<double>& analytic, double step = 1e-5,
                                 double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x);
    x[i] = saved - step;
    const double fm = f(x);
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max(std::abs(analytic[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// Convenience wrapper: builds a scalar loss from a single input tensor via
// `build`, runs backward, and compares the input gradient against central
// differences of the value-only evaluation.
inline double check_unary(const std::function<deepicp::ad::Tensor(
                              deepicp::ad::Tape*, const deepicp::ad::Tensor&)>& build,
                          const deepicp::ad::Tensor& input, double step = 1e-5) {
  using deepicp::ad::Tape;
  using deepicp::ad::Tensor;
  Tape tape;
  Tensor leaf = tape.leaf(input);
  Tensor loss = build(&tape, leaf);
  tape.backward(loss);
  const std::vector<double> analytic = tape.grad(leaf.node());

  auto value_only = [&](const std::vector<double>& x) {
    Tensor probe(input.shape(), x);
    return build(nullptr, probe).value();
  };
  return max_relative_error(value_only, input.values(), analytic, step);
}

}  // namespace gradcheck
