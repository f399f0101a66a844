#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace linfot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Metric { Euclidean, Chebyshev };

// Affine post-transform a*dist + b applied to a ground metric.
struct Rescale {
  double scale = 1.0;
  double shift = 0.0;
};

inline double groundDistance(Metric metric, const Eigen::Ref<const Vector>& x,
                             const Eigen::Ref<const Vector>& y) {
  switch (metric) {
    case Metric::Euclidean:
      return (x - y).norm();
    case Metric::Chebyshev:
      return (x - y).cwiseAbs().maxCoeff();
  }
  throw std::logic_error("unknown metric");
}

// Ground cost evaluator: a*metric(x,y) + b at arbitrary coordinates.
struct GroundCost {
  Metric metric = Metric::Euclidean;
  Rescale rescale;

  double operator()(const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& y) const {
    return rescale.scale * groundDistance(metric, x, y) + rescale.shift;
  }
};

/// Finitely supported probability measure: N points in R^d with positive
/// weights summing to one. Immutable after construction.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Matrix points, Vector weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.rows() != weights_.size())
      throw std::invalid_argument("points/weights size mismatch");
    if (points_.rows() == 0) throw std::invalid_argument("empty measure");
    for (Index i = 0; i < weights_.size(); ++i) {
      if (!(weights_[i] > 0.0) || weights_[i] < 1e-15)
        throw std::invalid_argument("weights must be strictly positive (>= 1e-15)");
    }
    if (std::abs(weights_.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("weights must sum to 1 within 1e-12");
    for (Index i = 0; i < points_.rows(); ++i)
      for (Index j = i + 1; j < points_.rows(); ++j)
        if ((points_.row(i) - points_.row(j)).cwiseAbs().maxCoeff() == 0.0)
          throw std::invalid_argument("support points must be pairwise distinct");
  }

  static DiscreteMeasure uniform(Matrix points) {
    const Index n = points.rows();
    return DiscreteMeasure(std::move(points), Vector::Constant(n, 1.0 / double(n)));
  }

  const Matrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  Index size() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }

 private:
  Matrix points_;
  Vector weights_;
};

/// N x M nonnegative cost evaluations, tagged with the ground metric and the
/// affine rescale that produced them.
class CostMatrix {
 public:
  CostMatrix(Matrix entries, Metric metric, Rescale rescale)
      : entries_(std::move(entries)), metric_(metric), rescale_(rescale) {
    if (rescale_.scale <= 0.0) throw std::invalid_argument("rescale.scale must be > 0");
    if (rescale_.shift < 0.0) throw std::invalid_argument("rescale.shift must be >= 0");
    if (entries_.size() == 0) throw std::invalid_argument("empty cost matrix");
    if ((entries_.array() < 0.0).any())
      throw std::invalid_argument("cost entries must be nonnegative");
    // shift >= 1 guarantees entries >= 1 (precondition for c >= 1 arguments)
    if (rescale_.shift >= 1.0 && entries_.minCoeff() < 1.0)
      throw std::invalid_argument("shift >= 1 requires all entries >= 1");
  }

  const Matrix& entries() const { return entries_; }
  Metric metric() const { return metric_; }
  const Rescale& rescale() const { return rescale_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }

  GroundCost ground() const { return GroundCost{metric_, rescale_}; }

  // Further affine transform a*c + b; the stored rescale is composed so the
  // tag still describes the map from the raw metric to the entries.
  CostMatrix rescaled(double a, double b) const {
    if (a <= 0.0) throw std::invalid_argument("scale must be > 0");
    if (b < 0.0) throw std::invalid_argument("shift must be >= 0");
    Rescale composed{a * rescale_.scale, a * rescale_.shift + b};
    return CostMatrix((a * entries_.array() + b).matrix(), metric_, composed);
  }

 private:
  Matrix entries_;
  Metric metric_;
  Rescale rescale_;
};

inline CostMatrix buildCost(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                            Metric metric, Rescale rescale = {}) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("buildCost: dimension mismatch between measures");
  Matrix c(mu.size(), nu.size());
  for (Index i = 0; i < mu.size(); ++i)
    for (Index j = 0; j < nu.size(); ++j)
      c(i, j) = rescale.scale * groundDistance(metric, mu.points().row(i).transpose(),
                                               nu.points().row(j).transpose()) +
                rescale.shift;
  return CostMatrix(std::move(c), metric, rescale);
}

/// Transport plan between two discrete measures: N x M nonnegative entries.
/// Marginal agreement is a query (marginalErrorsL1 / satisfiesMarginals), not
/// a constructor invariant, so that solver iterates and non-converged outputs
/// remain representable.
class Coupling {
 public:
  Coupling(Matrix entries, DiscreteMeasure mu, DiscreteMeasure nu)
      : entries_(std::move(entries)), mu_(std::move(mu)), nu_(std::move(nu)) {
    if (entries_.rows() != mu_.size() || entries_.cols() != nu_.size())
      throw std::invalid_argument("coupling shape must match marginals");
    if ((entries_.array() < 0.0).any())
      throw std::invalid_argument("coupling entries must be nonnegative");
  }

  static Coupling product(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    return Coupling(mu.weights() * nu.weights().transpose(), mu, nu);
  }

  // Permutation plan gamma^{i,sigma(i)} = 1/N; requires uniform equal-size marginals.
  static Coupling fromPermutation(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const std::vector<Index>& sigma) {
    const Index n = mu.size();
    if (nu.size() != n || Index(sigma.size()) != n)
      throw std::invalid_argument("permutation plan requires N = M");
    Matrix g = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) g(i, sigma[size_t(i)]) = 1.0 / double(n);
    return Coupling(std::move(g), mu, nu);
  }

  const Matrix& entries() const { return entries_; }
  const DiscreteMeasure& mu() const { return mu_; }
  const DiscreteMeasure& nu() const { return nu_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }

  bool satisfiesMarginals(double tol) const;

 private:
  Matrix entries_;
  DiscreteMeasure mu_;
  DiscreteMeasure nu_;
};

// (||gamma 1 - mu||_1, ||gamma^T 1 - nu||_1)
inline std::pair<double, double> marginalErrorsL1(const Coupling& g) {
  double er = (g.entries().rowwise().sum() - g.mu().weights()).cwiseAbs().sum();
  double ec = (g.entries().colwise().sum().transpose() - g.nu().weights()).cwiseAbs().sum();
  return {er, ec};
}

// Per-atom worst errors, for figure reproduction.
inline std::pair<double, double> marginalErrorsMax(const Coupling& g) {
  double er = (g.entries().rowwise().sum() - g.mu().weights()).cwiseAbs().maxCoeff();
  double ec = (g.entries().colwise().sum().transpose() - g.nu().weights()).cwiseAbs().maxCoeff();
  return {er, ec};
}

inline bool Coupling::satisfiesMarginals(double tol) const {
  auto [er, ec] = marginalErrorsL1(*this);
  return er <= tol && ec <= tol;
}

/// Thresholded support: the index pairs with gamma^{ij} > threshold.
struct SupportSet {
  std::vector<std::pair<Index, Index>> pairs;
  double threshold = 0.0;  // absolute value that was applied
};

// Default tau is relative to the max entry; Sinkhorn outputs are strictly
// positive everywhere, so the support must be thresholded.
inline SupportSet extractSupport(const Coupling& g, double relativeTau = 1e-9) {
  SupportSet s;
  s.threshold = relativeTau * g.entries().maxCoeff();
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      if (g.entries()(i, j) > s.threshold) s.pairs.emplace_back(i, j);
  return s;
}

/// Relative entropy H(gamma | mu x nu) in nats, with the convention
/// 0*log(0) = 0. Always finite for discrete couplings.
inline double entropy(const Coupling& g) {
  double h = 0.0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) {
      const double v = g.entries()(i, j);
      if (v > 0.0) h += v * std::log(v / (g.mu().weights()[i] * g.nu().weights()[j]));
    }
  return h;
}

// Crude entropy bound M = -sum mu_i log mu_i - sum nu_j log nu_j, valid for
// every feasible plan.
inline double entropyBoundCrude(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  double m = 0.0;
  for (Index i = 0; i < mu.size(); ++i) m -= mu.weights()[i] * std::log(mu.weights()[i]);
  for (Index j = 0; j < nu.size(); ++j) m -= nu.weights()[j] * std::log(nu.weights()[j]);
  return m;
}

/// max c_{ij} over the support {gamma^{ij} > tau}; tau is absolute, tau = 0
/// means the exact nonzero test. Throws if the support is empty at tau.
inline double essSup(const Coupling& g, const CostMatrix& cost, double tau = 0.0) {
  if (tau < 0.0) throw std::invalid_argument("essSup: tau must be >= 0");
  if (g.rows() != cost.rows() || g.cols() != cost.cols())
    throw std::invalid_argument("essSup: coupling/cost shape mismatch");
  double m = -1.0;
  bool any = false;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      if (g.entries()(i, j) > tau) {
        any = true;
        m = std::max(m, cost.entries()(i, j));
      }
  if (!any) throw std::runtime_error("essSup: empty support at threshold");
  return m;
}

// ||c||_{L^p(gamma)} = (sum gamma c^p)^{1/p}
inline double lpNorm(const Coupling& g, const CostMatrix& cost, double p) {
  if (p < 1.0) throw std::invalid_argument("lpNorm: p must be >= 1");
  double s = 0.0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      s += g.entries()(i, j) * std::pow(cost.entries()(i, j), p);
  return std::pow(s, 1.0 / p);
}

/// A full problem instance: marginals plus the cost recipe.
struct Instance {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  Metric metric = Metric::Euclidean;
  Rescale rescale;

  CostMatrix cost() const { return buildCost(mu, nu, metric, rescale); }
};

/// J_{p,eps}(gamma) = (sum gamma c^p + eps H(gamma|mu x nu))^{1/p}.
/// The inner value cannot be negative in exact arithmetic (both terms are
/// nonnegative for feasible plans); if round-off drives it below zero it is
/// clamped and *clampedToZero is set.
inline double evalJpe(const Coupling& g, const CostMatrix& cost, double p, double eps,
                      bool* clampedToZero = nullptr) {
  if (p < 1.0) throw std::invalid_argument("evalJpe: p must be >= 1");
  if (eps <= 0.0) throw std::invalid_argument("evalJpe: eps must be > 0");
  double inner = 0.0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      inner += g.entries()(i, j) * std::pow(cost.entries()(i, j), p);
  inner += eps * entropy(g);
  if (clampedToZero) *clampedToZero = false;
  if (inner < 0.0) {
    if (clampedToZero) *clampedToZero = true;
    inner = 0.0;
  }
  return std::pow(inner, 1.0 / p);
}

}  // namespace linfot
