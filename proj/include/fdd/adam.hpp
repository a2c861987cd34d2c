#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/tensor.hpp"

namespace fdd {

/// One trainable tensor plus its Adam moments. Moments stay empty until the
/// first optimizer step touches them.
template <class Real>
struct Parameter {
  std::string name;
  BasicTensor<Real> value;
  BasicTensor<Real> first_moment;
  BasicTensor<Real> second_moment;
};

/// Ordered parameter set. Layer "enc0" owns "enc0.weight" and "enc0.bias".
template <class Real>
class ParameterBlock {
 public:
  void add(std::string name, BasicTensor<Real> value) {
    for (const auto& p : params_) {
      if (p.name == name) throw ConfigError("duplicate parameter " + name);
    }
    params_.push_back({std::move(name), std::move(value), {}, {}});
  }

  std::size_t size() const noexcept { return params_.size(); }
  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t step) noexcept { step_ = step; }

  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }

  const Parameter<Real>& find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p;
    throw InputError("no parameter named " + name);
  }
  Parameter<Real>& find(const std::string& name) {
    return const_cast<Parameter<Real>&>(std::as_const(*this).find(name));
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool has_moments() const {
    for (const auto& p : params_)
      if (!p.first_moment.empty()) return true;
    return false;
  }

  void ensure_moments() {
    for (auto& p : params_) {
      if (p.first_moment.empty()) {
        p.first_moment = BasicTensor<Real>(p.value.shape());
        p.second_moment = BasicTensor<Real>(p.value.shape());
      }
    }
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<Real>> params_;
  std::uint64_t step_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. Gradients are validated before any parameter
/// is touched, so a NaN leaves the block exactly as it was.
template <class Real>
void adam_step(ParameterBlock<Real>& params,
               std::span<const BasicTensor<Real>> grads,
               const AdamOptions& opt) {
  if (grads.size() != params.size()) {
    detail::throw_dimension("adam_step: " + std::to_string(grads.size()) +
                            " gradients for " + std::to_string(params.size()) +
                            " parameters");
  }
  if (!(opt.lr > 0)) throw InputError("adam_step: learning rate must be > 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].value, grads[i], "adam_step");
    if (!grads[i].all_finite()) {
      throw NumericalError("adam_step: non-finite gradient for parameter " +
                           params[i].name + " at step " +
                           std::to_string(params.step() + 1));
    }
  }
  params.ensure_moments();
  const std::uint64_t t = params.step() + 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  const Real b1 = static_cast<Real>(opt.beta1);
  const Real b2 = static_cast<Real>(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    Real* w = p.value.raw();
    Real* m = p.first_moment.raw();
    Real* v = p.second_moment.raw();
    const Real* g = grads[i].raw();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = b1 * m[k] + (Real(1) - b1) * g[k];
      v[k] = b2 * v[k] + (Real(1) - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / c1;
      const double v_hat = static_cast<double>(v[k]) / c2;
      w[k] -= static_cast<Real>(opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps));
    }
  }
  params.set_step(t);
}

}  // namespace fdd
