#pragma once

#include "linfot/bottleneck.hpp"
#include "linfot/measures.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace linfot {

/// Block approximation of a plan at scale delta: mass between cube pairs is
/// redistributed as the product of the cube-restricted marginals. Marginals
/// are preserved exactly by construction.
struct BlockApproximation {
  Coupling coupling;
  double delta = 0.0;
  double L = 1.0;  // 1 + side of the smallest cube containing spt(mu)
  std::vector<std::vector<long long>> muCubes;  // lattice cube of each mu atom
  std::vector<std::vector<long long>> nuCubes;
};

namespace detail {

// Half-open cubes delta*(k + [0,1)^d); boundary atoms fall in the
// lower-index cube via floor.
inline std::vector<long long> cubeOf(const Eigen::Ref<const Vector>& point, double delta) {
  std::vector<long long> k(size_t(point.size()));
  for (Index d = 0; d < point.size(); ++d)
    k[size_t(d)] = (long long)(std::floor(point[d] / delta));
  return k;
}

inline double sideBound(const DiscreteMeasure& mu) {
  double extent = 0.0;
  for (Index d = 0; d < mu.dim(); ++d)
    extent = std::max(extent, mu.points().col(d).maxCoeff() - mu.points().col(d).minCoeff());
  return 1.0 + extent;
}

}  // namespace detail

inline BlockApproximation blockApproximate(const Coupling& gamma, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("blockApproximate: delta must be in (0,1)");
  if (!gamma.mu().points().allFinite() || !gamma.nu().points().allFinite())
    throw std::invalid_argument("blockApproximate: coordinates must be finite");

  const auto& mu = gamma.mu();
  const auto& nu = gamma.nu();
  const Index n = mu.size(), m = nu.size();

  BlockApproximation ba{Coupling(Matrix::Zero(n, m), mu, nu), delta,
                        detail::sideBound(mu)};
  ba.muCubes.reserve(size_t(n));
  ba.nuCubes.reserve(size_t(m));

  std::map<std::vector<long long>, std::vector<Index>> muGroups, nuGroups;
  for (Index i = 0; i < n; ++i) {
    auto k = detail::cubeOf(mu.points().row(i).transpose(), delta);
    muGroups[k].push_back(i);
    ba.muCubes.push_back(std::move(k));
  }
  for (Index j = 0; j < m; ++j) {
    auto l = detail::cubeOf(nu.points().row(j).transpose(), delta);
    nuGroups[l].push_back(j);
    ba.nuCubes.push_back(std::move(l));
  }

  Matrix out = Matrix::Zero(n, m);
  for (const auto& [kcube, rows] : muGroups) {
    double muMass = 0.0;
    for (Index i : rows) muMass += mu.weights()[i];
    for (const auto& [lcube, cols] : nuGroups) {
      double nuMass = 0.0;
      for (Index j : cols) nuMass += nu.weights()[j];
      double blockMass = 0.0;
      for (Index i : rows)
        for (Index j : cols) blockMass += gamma.entries()(i, j);
      if (blockMass <= 0.0) continue;
      for (Index i : rows)
        for (Index j : cols)
          out(i, j) = blockMass * (mu.weights()[i] / muMass) * (nu.weights()[j] / nuMass);
    }
  }
  ba.coupling = Coupling(std::move(out), mu, nu);
  return ba;
}

/// H(gamma^delta | mu x nu) against d log(L/delta).
struct EntropyBoundCheck {
  double entropyValue = 0.0;
  double bound = 0.0;
  bool pass = false;
};

inline EntropyBoundCheck verifyEntropyBound(const BlockApproximation& ba) {
  EntropyBoundCheck r;
  r.entropyValue = entropy(ba.coupling);
  r.bound = double(ba.coupling.mu().dim()) * std::log(ba.L / ba.delta);
  r.pass = r.entropyValue <= r.bound + 1e-12;
  return r;
}

/// Constructive displacement certificate: the coupling between gamma and
/// gamma^delta that only pairs points inside the same product cube moves
/// nothing farther than the occupied product-cube diameter. The exact
/// W_inf(gamma, gamma^delta) is NOT computed here (it is itself a bottleneck
/// problem — see exactWInf for cross-checks); the certificate is the upper
/// bound the construction yields.
struct WInfBoundCheck {
  double couplingCostBound = 0.0;
  double target = 0.0;  // sqrt(2d) * delta
  bool pass = false;
};

inline WInfBoundCheck verifyWInfBound(const BlockApproximation& ba,
                                      const Coupling& original) {
  const auto& mu = original.mu();
  const auto& nu = original.nu();
  const Index n = mu.size(), m = nu.size();
  if (ba.coupling.rows() != n || ba.coupling.cols() != m)
    throw std::invalid_argument("verifyWInfBound: shape mismatch");

  // group support atoms of both plans by product cube
  std::map<std::pair<std::vector<long long>, std::vector<long long>>,
           std::pair<std::vector<std::pair<Index, Index>>,
                     std::vector<std::pair<Index, Index>>>>
      cubes;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      auto key = std::make_pair(ba.muCubes[size_t(i)], ba.nuCubes[size_t(j)]);
      if (original.entries()(i, j) > 0.0) cubes[key].first.emplace_back(i, j);
      if (ba.coupling.entries()(i, j) > 0.0) cubes[key].second.emplace_back(i, j);
    }

  WInfBoundCheck r;
  r.target = std::sqrt(2.0 * double(mu.dim())) * ba.delta;
  for (const auto& [key, atoms] : cubes) {
    for (const auto& [i, j] : atoms.first)
      for (const auto& [i2, j2] : atoms.second) {
        const double dx = (mu.points().row(i) - mu.points().row(i2)).squaredNorm();
        const double dy = (nu.points().row(j) - nu.points().row(j2)).squaredNorm();
        r.couplingCostBound = std::max(r.couplingCostBound, std::sqrt(dx + dy));
      }
  }
  r.pass = r.couplingCostBound <= r.target + 1e-12;
  return r;
}

/// Exact W_inf between two plans over the same product space, via the
/// bottleneck oracle on the lifted 2d-dimensional instance. Intended for
/// small cross-checks.
inline double exactWInf(const Coupling& a, const Coupling& b) {
  auto lift = [](const Coupling& g) {
    std::vector<std::pair<Index, Index>> atoms;
    for (Index i = 0; i < g.rows(); ++i)
      for (Index j = 0; j < g.cols(); ++j)
        if (g.entries()(i, j) > 0.0) atoms.emplace_back(i, j);
    const Index d1 = g.mu().dim(), d2 = g.nu().dim();
    Matrix pts(Index(atoms.size()), d1 + d2);
    Vector w(Index(atoms.size()));
    for (size_t t = 0; t < atoms.size(); ++t) {
      pts.row(Index(t)).head(d1) = g.mu().points().row(atoms[t].first);
      pts.row(Index(t)).tail(d2) = g.nu().points().row(atoms[t].second);
      w[Index(t)] = g.entries()(atoms[t].first, atoms[t].second);
    }
    w /= w.sum();  // guard fp drift; plan masses already sum to 1
    return DiscreteMeasure(std::move(pts), std::move(w));
  };
  DiscreteMeasure la = lift(a), lb = lift(b);
  CostMatrix pairing = buildCost(la, lb, Metric::Euclidean);
  return solveBottleneck(la, lb, pairing).value;
}

}  // namespace linfot
