#pragma once

// Tape-based reverse-mode differentiation over BasicTensor values.
//
// Each recorded node keeps its forward value and a closure that, given the
// node's output gradient, accumulates into the gradients of its inputs.
// backward() walks the nodes in exact reverse recording order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/kernels.hpp"
#include "fdd/tensor.hpp"

namespace fdd::ad {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <class Real>
class Tape {
 public:
  using TensorT = BasicTensor<Real>;
  /// (output gradient, input values, input gradients or null).
  using BackwardFn =
      std::function<void(const TensorT&, const std::vector<const TensorT*>&,
                         const std::vector<TensorT*>&)>;

  Var constant(TensorT value) { return push(std::move(value), false, {}, {}); }
  Var parameter(TensorT value) { return push(std::move(value), true, {}, {}); }

  /// Records an op result. The backward closure only runs when at least one
  /// input needs a gradient.
  Var record(TensorT value, std::vector<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || node(v).needs_grad;
    return push(std::move(value), needs, std::move(inputs),
                needs ? std::move(backward) : BackwardFn{});
  }

  const TensorT& value(Var v) const { return node(v).value; }
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  /// Gradient accumulated at v by the last backward(); zeros if v was never
  /// reached.
  TensorT grad(Var v) const {
    const Node& n = node(v);
    return n.grad.empty() ? TensorT(n.value.shape()) : n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates to every node that needs a
  /// gradient. root must be a single-element tensor.
  void backward(Var root) {
    if (value(root).size() != 1) {
      fdd::detail::throw_dimension("backward: root must be a scalar, got " +
                                   shape_string(value(root).shape()));
    }
    for (Node& n : nodes_) n.grad = TensorT();
    Node& r = nodes_[root.id];
    r.grad = TensorT(r.value.shape(), Real(1));
    visit_order_.clear();
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      visit_order_.push_back(i);
      std::vector<const TensorT*> values;
      std::vector<TensorT*> grads;
      values.reserve(n.inputs.size());
      grads.reserve(n.inputs.size());
      for (Var in : n.inputs) {
        Node& src = nodes_[in.id];
        values.push_back(&src.value);
        if (src.needs_grad) {
          if (src.grad.empty()) src.grad = TensorT(src.value.shape());
          grads.push_back(&src.grad);
        } else {
          grads.push_back(nullptr);
        }
      }
      n.backward(n.grad, values, grads);
    }
  }

  /// Node ids whose backward closures ran in the last backward(), in call
  /// order.
  const std::vector<std::size_t>& visit_order() const { return visit_order_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool needs_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
  };

  Var push(TensorT value, bool needs, std::vector<Var> inputs,
           BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), TensorT(), needs, std::move(inputs),
                          std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw InputError("invalid tape variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives.

template <class Real>
Var conv2d(Tape<Real>& tape, Var input, Var weights, Var bias,
           kernels::ConvOptions opt) {
  auto out = kernels::conv2d(tape.value(input), tape.value(weights),
                             tape.value(bias), opt);
  return tape.record(
      std::move(out), {input, weights, bias},
      [opt](const auto& dy, const auto& in, const auto& grads) {
        kernels::conv2d_backward(*in[0], *in[1], dy, opt, grads[0], grads[1],
                                 grads[2]);
      });
}

template <class Real>
Var conv2d_transpose(Tape<Real>& tape, Var input, Var weights, Var bias,
                     kernels::TransposedConvOptions opt) {
  auto out = kernels::conv2d_transpose(tape.value(input), tape.value(weights),
                                       tape.value(bias), opt);
  return tape.record(
      std::move(out), {input, weights, bias},
      [opt](const auto& dy, const auto& in, const auto& grads) {
        kernels::conv2d_transpose_backward(*in[0], *in[1], dy, opt, grads[0],
                                           grads[1], grads[2]);
      });
}

/// y = x W^T + b with x [N, in], W [out, in], b [out].
template <class Real>
Var linear(Tape<Real>& tape, Var input, Var weights, Var bias) {
  using CMap = kernels::detail::ConstMatrixMap<Real>;
  using MMap = kernels::detail::MatrixMap<Real>;
  const auto& x = tape.value(input);
  const auto& w = tape.value(weights);
  const auto& b = tape.value(bias);
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.dim(1) ||
      b.dim(0) != w.dim(0)) {
    fdd::detail::throw_dimension("linear: incompatible shapes " +
                                 shape_string(x.shape()) + ", " +
                                 shape_string(w.shape()) + ", " +
                                 shape_string(b.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), outd = w.dim(0);
  BasicTensor<Real> y({n, outd});
  MMap ym(y.raw(), n, outd);
  ym.noalias() = CMap(x.raw(), n, in) * CMap(w.raw(), outd, in).transpose();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < outd; ++k) ym(i, k) += b[k];
  return tape.record(
      std::move(y), {input, weights, bias},
      [n, in, outd](const auto& dy, const auto& vals, const auto& grads) {
        CMap g(dy.raw(), n, outd);
        if (grads[0]) {
          MMap(grads[0]->raw(), n, in).noalias() +=
              g * CMap(vals[1]->raw(), outd, in);
        }
        if (grads[1]) {
          MMap(grads[1]->raw(), outd, in).noalias() +=
              g.transpose() * CMap(vals[0]->raw(), n, in);
        }
        if (grads[2]) {
          for (std::size_t k = 0; k < outd; ++k) {
            Real s = 0;
            for (std::size_t i = 0; i < n; ++i) s += g(i, k);
            (*grads[2])[k] += s;
          }
        }
      });
}

template <class Real>
Var relu(Tape<Real>& tape, Var input) {
  BasicTensor<Real> y = tape.value(input);
  for (Real& v : y.data()) v = v > Real(0) ? v : Real(0);
  return tape.record(std::move(y), {input},
                     [](const auto& dy, const auto& in, const auto& grads) {
                       const Real* x = in[0]->raw();
                       Real* g = grads[0]->raw();
                       for (std::size_t i = 0; i < dy.size(); ++i)
                         if (x[i] > Real(0)) g[i] += dy[i];
                     });
}

template <class Real>
Var tanh(Tape<Real>& tape, Var input) {
  BasicTensor<Real> y = tape.value(input);
  for (Real& v : y.data()) v = std::tanh(v);
  auto saved = y;
  return tape.record(
      std::move(y), {input},
      [saved = std::move(saved)](const auto& dy, const auto&,
                                 const auto& grads) {
        Real* g = grads[0]->raw();
        for (std::size_t i = 0; i < dy.size(); ++i)
          g[i] += dy[i] * (Real(1) - saved[i] * saved[i]);
      });
}

template <class Real>
Var reshape(Tape<Real>& tape, Var input, Shape shape) {
  auto y = tape.value(input).reshaped(std::move(shape));
  return tape.record(std::move(y), {input},
                     [](const auto& dy, const auto&, const auto& grads) {
                       Real* g = grads[0]->raw();
                       for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
                     });
}

/// Collapses all but the leading axis: [N, ...] -> [N, prod(...)].
template <class Real>
Var flatten(Tape<Real>& tape, Var input) {
  const auto& x = tape.value(input);
  return reshape(tape, input, Shape{x.dim(0), x.size() / x.dim(0)});
}

template <class Real>
Var sum(Tape<Real>& tape, Var input) {
  Real s = 0;
  for (Real v : tape.value(input).data()) s += v;
  return tape.record(BasicTensor<Real>({1}, std::vector<Real>{s}), {input},
                     [](const auto& dy, const auto&, const auto& grads) {
                       for (Real& g : grads[0]->data()) g += dy[0];
                     });
}

/// Elementwise product with a fixed (non-differentiated) tensor, then summed.
/// Projects a tensor-valued output onto a random direction for gradient
/// checks.
template <class Real>
Var weighted_sum(Tape<Real>& tape, Var input, BasicTensor<Real> weights) {
  require_same_shape(tape.value(input), weights, "weighted_sum");
  Real s = 0;
  const auto& x = tape.value(input);
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  return tape.record(
      BasicTensor<Real>({1}, std::vector<Real>{s}), {input},
      [w = std::move(weights)](const auto& dy, const auto&, const auto& grads) {
        Real* g = grads[0]->raw();
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += dy[0] * w[i];
      });
}

/// Mean over all elements of (x - y)^2.
template <class Real>
Var mse_loss(Tape<Real>& tape, Var x, Var y) {
  const auto& a = tape.value(x);
  const auto& b = tape.value(y);
  require_same_shape(a, b, "mse_loss");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real d = a[i] - b[i];
    s += d * d;
  }
  const Real scale = Real(1) / static_cast<Real>(a.size());
  return tape.record(
      BasicTensor<Real>({1}, std::vector<Real>{s * scale}), {x, y},
      [scale](const auto& dy, const auto& in, const auto& grads) {
        const Real k = Real(2) * scale * dy[0];
        const auto& a = *in[0];
        const auto& b = *in[1];
        if (grads[0])
          for (std::size_t i = 0; i < a.size(); ++i)
            (*grads[0])[i] += k * (a[i] - b[i]);
        if (grads[1])
          for (std::size_t i = 0; i < a.size(); ++i)
            (*grads[1])[i] -= k * (a[i] - b[i]);
      });
}

/// ||mu||^2 + Tr(Sigma) of a feature batch [N, D], with mu the row mean and
/// Sigma the unbiased (N-1) covariance.
template <class Real>
Var latent_spread(Tape<Real>& tape, Var features) {
  const auto& w = tape.value(features);
  if (w.rank() != 2 || w.dim(0) < 2) {
    throw InputError("latent_spread: need a [N>=2, D] feature batch, got " +
                     shape_string(w.shape()));
  }
  const std::size_t n = w.dim(0), d = w.dim(1);
  std::vector<Real> mu(d, Real(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += w[i * d + j];
  for (Real& m : mu) m /= static_cast<Real>(n);
  Real mean_sq = 0;
  for (Real m : mu) mean_sq += m * m;
  Real trace = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const Real c = w[i * d + j] - mu[j];
      trace += c * c;
    }
  }
  trace /= static_cast<Real>(n - 1);
  return tape.record(
      BasicTensor<Real>({1}, std::vector<Real>{mean_sq + trace}), {features},
      [n, d, mu = std::move(mu)](const auto& dy, const auto& in,
                                 const auto& grads) {
        const auto& w = *in[0];
        const Real a = Real(2) / static_cast<Real>(n);
        const Real b = Real(2) / static_cast<Real>(n - 1);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j)
            (*grads[0])[i * d + j] +=
                dy[0] * (a * mu[j] + b * (w[i * d + j] - mu[j]));
      });
}

}  // namespace fdd::ad
