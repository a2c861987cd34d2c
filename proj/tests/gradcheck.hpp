#pragma once

// Central finite-difference checks for tape-recorded scalar functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fdd/autodiff.hpp"
#include "fdd/rng.hpp"
#include "fdd/tensor.hpp"

namespace fdd::test {

using Builder =
    std::function<ad::Var(ad::Tape<double>&, const std::vector<ad::Var>&)>;

struct GradCheck {
  double rel_error = 0;  // ||analytic - numeric|| / max(norms)
  std::string worst_input;
};

inline double evaluate_scalar(const Builder& f, const std::vector<Tensor>& inputs) {
  ad::Tape<double> tape;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return tape.value(f(tape, vars))[0];
}

/// Largest norm-wise relative error over all inputs.
inline GradCheck check_gradients(const Builder& f, std::vector<Tensor> inputs,
                                 double h = 1e-6) {
  ad::Tape<double> tape;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.parameter(t));
  const ad::Var out = f(tape, vars);
  tape.backward(out);
  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = evaluate_scalar(f, inputs);
      inputs[k][i] = orig - h;
      const double down = evaluate_scalar(f, inputs);
      inputs[k][i] = orig;
      const double numeric = (up - down) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    const double rel = std::sqrt(diff2) / scale;
    if (rel >= result.rel_error) {
      result.rel_error = rel;
      result.worst_input = "input " + std::to_string(k);
    }
  }
  return result;
}

/// Uniform values in [lo, hi] with magnitudes at least `gap`, so ReLU kinks
/// sit far from every probe.
inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1,
                            double gap = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    do {
      v = u(rng);
    } while (std::abs(v) < gap);
  }
  return t;
}

}  // namespace fdd::test
