#pragma once

#include "linfot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <vector>

namespace linfot {

namespace detail {

// Dinic max-flow with int64 capacities.
class MaxFlow {
 public:
  explicit MaxFlow(int nodes) : head_(nodes, -1), level_(nodes), iter_(nodes) {}

  void addEdge(int u, int v, std::int64_t cap) {
    edges_.push_back({v, head_[u], cap});
    head_[u] = int(edges_.size()) - 1;
    edges_.push_back({u, head_[v], 0});
    head_[v] = int(edges_.size()) - 1;
  }

  std::int64_t run(int s, int t) {
    std::int64_t flow = 0;
    while (bfs(s, t)) {
      iter_ = head_;
      while (std::int64_t f = dfs(s, t, kInf)) flow += f;
    }
    return flow;
  }

  std::int64_t flowOn(int edgeId) const { return edges_[size_t(2 * edgeId + 1)].cap; }

 private:
  static constexpr std::int64_t kInf = std::int64_t(1) << 62;
  struct Edge {
    int to;
    int next;
    std::int64_t cap;
  };

  bool bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int e = head_[u]; e != -1; e = edges_[size_t(e)].next)
        if (edges_[size_t(e)].cap > 0 && level_[edges_[size_t(e)].to] < 0) {
          level_[edges_[size_t(e)].to] = level_[u] + 1;
          q.push(edges_[size_t(e)].to);
        }
    }
    return level_[t] >= 0;
  }

  std::int64_t dfs(int u, int t, std::int64_t limit) {
    if (u == t) return limit;
    for (int& e = iter_[u]; e != -1; e = edges_[size_t(e)].next) {
      Edge& ed = edges_[size_t(e)];
      if (ed.cap > 0 && level_[ed.to] == level_[u] + 1) {
        std::int64_t f = dfs(ed.to, t, std::min(limit, ed.cap));
        if (f > 0) {
          ed.cap -= f;
          edges_[size_t(e ^ 1)].cap += f;
          return f;
        }
      }
    }
    return 0;
  }

  std::vector<Edge> edges_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

// Integer mass scale: weights are scaled by 1e12 and rounded so feasibility
// decisions are exact integer comparisons, never floating-point ones.
constexpr double kMassScale = 1e12;

}  // namespace detail

/// Feasibility of the transportation polytope restricted to edges
/// {(i,j): c_ij <= t}: can a flow route (essentially) all supply? Monotone
/// in t, which is what makes the threshold binary search valid.
inline bool thresholdFeasible(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                              const CostMatrix& cost, double t) {
  const Index n = mu.size(), m = nu.size();
  const int source = 0, sink = 1;
  detail::MaxFlow net(int(n + m) + 2);
  std::int64_t supplySum = 0, demandSum = 0;
  for (Index i = 0; i < n; ++i) {
    const auto c = std::int64_t(std::llround(mu.weights()[i] * detail::kMassScale));
    supplySum += c;
    net.addEdge(source, 2 + int(i), c);
  }
  for (Index j = 0; j < m; ++j) {
    const auto c = std::int64_t(std::llround(nu.weights()[j] * detail::kMassScale));
    demandSum += c;
    net.addEdge(2 + int(n) + int(j), sink, c);
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      if (cost.entries()(i, j) <= t)
        net.addEdge(2 + int(i), 2 + int(n) + int(j), supplySum);
  return net.run(source, sink) == std::min(supplySum, demandSum);
}

struct BottleneckResult {
  double value = 0.0;                        // v_inf
  Coupling witnessPlan;                      // a feasible plan achieving it
  std::pair<Index, Index> criticalPair{0, 0};  // support pair with c = v_inf
};

/// Exact v_inf = min over feasible plans of the largest cost on their
/// support. The optimum is always attained at a cost entry, so the search is
/// a binary search over the sorted distinct entries, each probe a max-flow
/// feasibility check.
inline BottleneckResult solveBottleneck(const DiscreteMeasure& mu,
                                        const DiscreteMeasure& nu,
                                        const CostMatrix& cost) {
  if (mu.size() != cost.rows() || nu.size() != cost.cols())
    throw std::invalid_argument("solveBottleneck: shape mismatch");
  std::vector<double> levels(cost.entries().data(),
                             cost.entries().data() + cost.entries().size());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  // smallest feasible threshold; the top level is always feasible
  size_t lo = 0, hi = levels.size() - 1;
  if (!thresholdFeasible(mu, nu, cost, levels[hi]))
    throw std::logic_error("solveBottleneck: full edge set infeasible");
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (thresholdFeasible(mu, nu, cost, levels[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  const double vInf = levels[lo];

  // witness flow at the optimal threshold
  const Index n = mu.size(), m = nu.size();
  detail::MaxFlow net(int(n + m) + 2);
  std::int64_t supplySum = 0;
  for (Index i = 0; i < n; ++i) {
    const auto c = std::int64_t(std::llround(mu.weights()[i] * detail::kMassScale));
    supplySum += c;
    net.addEdge(0, 2 + int(i), c);
  }
  for (Index j = 0; j < m; ++j)
    net.addEdge(2 + int(n) + int(j), 1,
                std::int64_t(std::llround(nu.weights()[j] * detail::kMassScale)));
  std::vector<std::pair<Index, Index>> arcIndex;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      if (cost.entries()(i, j) <= vInf) {
        net.addEdge(2 + int(i), 2 + int(n) + int(j), supplySum);
        arcIndex.emplace_back(i, j);
      }
  net.run(0, 1);

  Matrix plan = Matrix::Zero(n, m);
  for (size_t a = 0; a < arcIndex.size(); ++a) {
    const auto f = net.flowOn(int(n + m) + int(a));
    if (f > 0)
      plan(arcIndex[a].first, arcIndex[a].second) = double(f) / detail::kMassScale;
  }

  BottleneckResult res{vInf, Coupling(std::move(plan), mu, nu)};
  double best = -1.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      if (res.witnessPlan.entries()(i, j) > 0.0 && cost.entries()(i, j) > best) {
        best = cost.entries()(i, j);
        res.criticalPair = {i, j};
      }
  return res;
}

/// Desk-scale oracle: min over all permutations of the max assignment cost.
/// Only valid for uniform equal-size marginals, and only meant for N <= 10.
inline double permutationBruteForce(const CostMatrix& cost, const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu) {
  const Index n = mu.size();
  if (nu.size() != n || cost.rows() != n || cost.cols() != n)
    throw std::invalid_argument("permutationBruteForce: requires N = M");
  if (n > 10) throw std::invalid_argument("permutationBruteForce: N must be <= 10");
  for (Index i = 0; i < n; ++i)
    if (std::abs(mu.weights()[i] - 1.0 / double(n)) > 1e-12 ||
        std::abs(nu.weights()[i] - 1.0 / double(n)) > 1e-12)
      throw std::invalid_argument("permutationBruteForce: marginals must be uniform");

  std::vector<Index> sigma(size_t(n));
  std::iota(sigma.begin(), sigma.end(), Index(0));
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (Index i = 0; i < n; ++i)
      worst = std::max(worst, cost.entries()(i, sigma[size_t(i)]));
    best = std::min(best, worst);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return best;
}

/// m(gamma): largest mass a (near-)optimal plan puts on a critical edge,
/// i.e. on entries with gamma > support threshold and c within tolEq of
/// vInf. found = false signals a plan that carries no critical mass at all
/// (a non-optimality diagnostic).
struct MGammaResult {
  double value = 0.0;
  bool found = false;
};

inline MGammaResult computeMGamma(const Coupling& gamma, const CostMatrix& cost,
                                  double vInf, double tolEqRel = 1e-9,
                                  double supportTauRel = 1e-9) {
  const double tolEq = tolEqRel * std::max(1.0, std::abs(vInf));
  const double tau = supportTauRel * gamma.entries().maxCoeff();
  if (essSup(gamma, cost, tau) > vInf + tolEq)
    throw std::invalid_argument("computeMGamma: plan is not (approximately) optimal");
  MGammaResult r;
  for (Index i = 0; i < gamma.rows(); ++i)
    for (Index j = 0; j < gamma.cols(); ++j)
      if (gamma.entries()(i, j) > tau &&
          std::abs(cost.entries()(i, j) - vInf) <= tolEq) {
        r.found = true;
        r.value = std::max(r.value, gamma.entries()(i, j));
      }
  return r;
}

}  // namespace linfot
