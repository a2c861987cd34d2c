#pragma once

// Distribution distances over latent feature sets.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/features.hpp"
#include "fdd/rng.hpp"

namespace fdd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Mean and covariance of a feature set.
struct GaussianSummary {
  Vector mu;
  Matrix sigma;

  Eigen::Index dim() const { return mu.size(); }
};

/// Column means and unbiased (N - 1) covariance, symmetrized.
inline GaussianSummary summarize(const FeatureSet& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) {
    throw InputError("summarize: covariance needs at least 2 samples, got " +
                     std::to_string(n));
  }
  GaussianSummary s;
  s.mu = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  return s;
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues slightly
/// below zero (rounding in rank-deficient covariances) are clamped to 0.
inline Matrix matrix_sqrt_psd(const Matrix& a) {
  if (a.rows() != a.cols()) {
    detail::throw_dimension("matrix_sqrt_psd: matrix is not square");
  }
  if (a.size() == 0) return a;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw InputError("matrix_sqrt_psd: input is not symmetric (max |A - A^T| = " +
                     std::to_string(asym) + ")");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("matrix_sqrt_psd: eigendecomposition failed");
  }
  Vector values = eig.eigenvalues();
  const double tol =
      1e-8 * std::max(std::abs(sym.trace()), values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -tol) {
    throw NumericalError("matrix_sqrt_psd: eigenvalue " +
                         std::to_string(values.minCoeff()) +
                         " is too negative for a PSD matrix");
  }
  values = values.cwiseMax(0.0).cwiseSqrt();
  Matrix root = eig.eigenvectors() * values.asDiagonal() *
                eig.eigenvectors().transpose();
  return 0.5 * (root + root.transpose());
}

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
///
/// Tr((Sa Sb)^{1/2}) is evaluated as Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}); the
/// two products are similar, so their eigenvalues agree, and the second is
/// symmetric PSD.
inline double frechet_distance(const GaussianSummary& a,
                               const GaussianSummary& b) {
  if (a.dim() != b.dim() || a.sigma.rows() != a.dim() ||
      b.sigma.rows() != b.dim()) {
    detail::throw_dimension("frechet_distance: dimensions differ (" +
                            std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()) + ")");
  }
  // Identical summaries are exactly 0; rounding in the square roots would
  // otherwise leave a residual of order 1e-15.
  if (a.mu == b.mu && a.sigma == b.sigma) return 0.0;
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const Matrix root_a = matrix_sqrt_psd(a.sigma);
  Matrix inner = root_a * b.sigma * root_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inner, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("frechet_distance: eigendecomposition failed");
  }
  double cross = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
    cross += std::sqrt(std::max(eig.eigenvalues()[i], 0.0));
  const double value =
      mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
  if (value < 0) {
    if (value > -1e-6) return 0.0;
    throw NumericalError("frechet_distance: negative residual " +
                         std::to_string(value));
  }
  return value;
}

inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  return frechet_distance(summarize(a), summarize(b));
}

/// k(x, y) = (gamma <x, y> + coef)^degree. gamma <= 0 selects 1 / D.
struct PolynomialKernel {
  int degree = 3;
  double gamma = 0.0;
  double coef = 1.0;
};

namespace detail {

inline double poly_kernel(const FeatureSet& a, Eigen::Index i,
                          const FeatureSet& b, Eigen::Index j, double gamma,
                          double coef, int degree) {
  double dot = 0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) dot += a(i, k) * b(j, k);
  return std::pow(gamma * dot + coef, degree);
}

/// Lexicographic order on (rows, cols, row-major values).
inline bool canonical_less(const FeatureSet& a, const FeatureSet& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                      b.data() + b.size());
}

}  // namespace detail

/// Unbiased squared MMD: within-set kernel means skip the diagonal.
/// Summation order is fixed (row-major over i, then j) so results are
/// reproducible to the bit; the estimator may be slightly negative.
inline double mmd2_poly(const FeatureSet& a, const FeatureSet& b,
                        const PolynomialKernel& kernel = {}) {
  if (a.rows() < 2 || b.rows() < 2) {
    throw InputError("mmd2_poly: each set needs at least 2 samples");
  }
  if (a.cols() != b.cols()) {
    detail::throw_dimension("mmd2_poly: feature dimensions differ");
  }
  const double gamma =
      kernel.gamma > 0 ? kernel.gamma : 1.0 / static_cast<double>(a.cols());
  auto within = [&](const FeatureSet& x) {
    double s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.rows(); ++j)
        if (i != j)
          s += detail::poly_kernel(x, i, x, j, gamma, kernel.coef, kernel.degree);
    const double n = static_cast<double>(x.rows());
    return s / (n * (n - 1));
  };
  auto across = [&](const FeatureSet& x, const FeatureSet& y) {
    double s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < y.rows(); ++j)
        s += detail::poly_kernel(x, i, y, j, gamma, kernel.coef, kernel.degree);
    return s / (static_cast<double>(x.rows()) * static_cast<double>(y.rows()));
  };
  // The cross term's outer loop runs over the canonically smaller set so
  // that mmd2(a, b) and mmd2(b, a) sum in the same order.
  const bool a_first = !detail::canonical_less(b, a);
  const double kab = a_first ? across(a, b) : across(b, a);
  return within(a) + within(b) - 2.0 * kab;
}

/// 0-dimensional persistence pairs of a point cloud under Euclidean
/// distance. Every component is born at 0; the N - 1 finite deaths are the
/// edge lengths of a minimum spanning tree.
struct PersistenceDiagram {
  std::vector<std::pair<double, double>> pairs;  // (birth, death), sorted

  std::vector<double> deaths() const {
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& p : pairs) d.push_back(p.second);
    return d;
  }
};

inline double euclidean(const FeatureSet& x, Eigen::Index i, Eigen::Index j) {
  double s = 0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double d = x(i, k) - x(j, k);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Single-linkage filtration: Kruskal over sorted pairwise distances with a
/// union-find; each merge records one death.
inline PersistenceDiagram persistence_0d(const FeatureSet& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) throw InputError("persistence_0d: need at least 2 points");
  struct Edge {
    double length;
    std::uint32_t i, j;
  };
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      edges.push_back({euclidean(points, static_cast<Eigen::Index>(i),
                                 static_cast<Eigen::Index>(j)),
                       static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(j)});
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.length != b.length) return a.length < b.length;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });

  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  std::vector<std::uint8_t> rank(n, 0);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  PersistenceDiagram diagram;
  diagram.pairs.reserve(n - 1);
  for (const Edge& e : edges) {
    std::uint32_t a = find(e.i), b = find(e.j);
    if (a == b) continue;
    if (rank[a] < rank[b]) std::swap(a, b);
    parent[b] = a;
    if (rank[a] == rank[b]) ++rank[a];
    diagram.pairs.emplace_back(0.0, e.length);
    if (diagram.pairs.size() == n - 1) break;
  }
  return diagram;
}

/// Rows of `features` chosen uniformly without replacement, in ascending row
/// order.
inline FeatureSet subsample_rows(const FeatureSet& features, std::size_t count,
                                 std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (count >= n) return features;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  FeatureSet out(static_cast<Eigen::Index>(count), features.cols());
  for (std::size_t r = 0; r < count; ++r)
    out.row(static_cast<Eigen::Index>(r)) =
        features.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

/// p = infinity gives the max-norm.
inline double lp_distance(const std::vector<double>& x,
                          const std::vector<double>& y, double p) {
  if (x.size() != y.size()) detail::throw_dimension("lp_distance: length mismatch");
  if (!(p >= 1)) throw InputError("lp_distance: p must be >= 1");
  if (std::isinf(p)) {
    double m = 0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
  }
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::pow(std::abs(x[i] - y[i]), p);
  return std::pow(s, 1.0 / p);
}

/// l_p distance between the sorted 0-dim death vectors of two clouds. The
/// larger set is subsampled (seeded) to the smaller set's size first.
inline double topology_distance(const FeatureSet& a, const FeatureSet& b,
                                double p = 2.0, std::uint64_t seed = 0) {
  if (a.rows() < 2 || b.rows() < 2)
    throw InputError("topology_distance: each set needs at least 2 points");
  const auto n = static_cast<std::size_t>(std::min(a.rows(), b.rows()));
  const FeatureSet sa = subsample_rows(a, n, derive_seed(seed, {0}));
  const FeatureSet sb = subsample_rows(b, n, derive_seed(seed, {1}));
  return lp_distance(persistence_0d(sa).deaths(), persistence_0d(sb).deaths(), p);
}

}  // namespace fdd
