#pragma once

#include "linfot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace linfot {

/// A cycle drawn from a support, with the two sides of the tested inequality.
/// violation > 0 means the cycle breaks the monotonicity property.
struct CycleWitness {
  std::vector<std::pair<Index, Index>> indices;
  double lhs = 0.0;
  double rhs = 0.0;
  double violation = -std::numeric_limits<double>::infinity();
};

struct CycleCheckResult {
  bool monotone = true;
  CycleWitness worst;  // maximal-violation cycle found (violation <= tol on pass)
};

namespace detail {

inline double binomialGuard(std::size_t s, int k) {
  double b = 1.0;
  for (int i = 0; i < k; ++i) b *= double(s > std::size_t(i) ? s - std::size_t(i) : 1) / double(i + 1);
  return b;
}

// Slot-level cycle witness used by the enumeration cores.
struct SlotWitness {
  std::vector<int> slots;
  double lhs = 0.0;
  double rhs = 0.0;
  double violation = -std::numeric_limits<double>::infinity();
};

inline bool witnessLess(const SlotWitness& a, const SlotWitness& b) {
  if (a.violation != b.violation) return a.violation < b.violation;
  return b.slots < a.slots;  // tie-break: prefer lexicographically smaller cycle
}

// Max-form enumeration: for every cycle (length 2..K, repetition allowed)
// check max own <= max shifted. Cycles are enumerated rooted at their
// own-cost argmax, which fixes the left side and lets partial chains be cut
// as soon as the running shifted max reaches it.
inline SlotWitness worstMaxFormCycle(const std::vector<double>& own,
                                     const std::function<double(int, int)>& cross,
                                     int K) {
  const int s = int(own.size());
  std::vector<int> order(size_t(s));
  for (int i = 0; i < s; ++i) order[size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return own[size_t(a)] > own[size_t(b)]; });

  auto runStarts = [&](const std::vector<int>& starts) {
    SlotWitness best;
    std::vector<int> chain;
    for (int start : starts) {
      const double cs = own[size_t(start)];
      if (cs <= best.violation) break;  // starts sorted by own desc
      chain.assign(1, start);
      auto dfs = [&](auto&& self, double shiftedMax) -> void {
        const int last = chain.back();
        if (chain.size() >= 2) {
          const double closed = std::max(shiftedMax, cross(last, start));
          SlotWitness cand{chain, cs, closed, cs - closed};
          if (witnessLess(best, cand)) best = cand;
        }
        if (int(chain.size()) == K) return;
        for (int b = 0; b < s; ++b) {
          if (own[size_t(b)] > cs) continue;  // covered when rooted at b
          const double next = std::max(shiftedMax, cross(last, b));
          if (cs - next <= best.violation) continue;
          chain.push_back(b);
          self(self, next);
          chain.pop_back();
        }
      };
      dfs(dfs, -std::numeric_limits<double>::infinity());
    }
    return best;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (s < 64 || hw < 2) return runStarts(order);

  // parallel over the first chain element, reduced by max
  const unsigned workers = std::min<unsigned>(hw, 8);
  std::vector<std::vector<int>> parts(workers);
  for (int i = 0; i < s; ++i) parts[size_t(i) % workers].push_back(order[size_t(i)]);
  std::vector<SlotWitness> results(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] { results[w] = runStarts(parts[w]); });
  for (auto& t : pool) t.join();
  SlotWitness best;
  for (const auto& r : results)
    if (witnessLess(best, r)) best = r;
  return best;
}

// Sum-form enumeration (classical cyclical monotonicity). Rooted at the
// minimal slot index of the cycle; partial sums are cut against the best
// achievable remaining gain.
inline SlotWitness worstSumFormCycle(const std::vector<double>& own,
                                     const std::function<double(int, int)>& cross,
                                     int K) {
  const int s = int(own.size());
  double maxOwn = -std::numeric_limits<double>::infinity();
  double minCross = std::numeric_limits<double>::infinity();
  for (int a = 0; a < s; ++a) {
    maxOwn = std::max(maxOwn, own[size_t(a)]);
    for (int b = 0; b < s; ++b) minCross = std::min(minCross, cross(a, b));
  }
  const double stepGain = std::max(0.0, maxOwn - minCross);

  SlotWitness best;
  std::vector<int> chain;
  for (int start = 0; start < s; ++start) {
    double minClose = std::numeric_limits<double>::infinity();
    for (int b = 0; b < s; ++b) minClose = std::min(minClose, cross(b, start));
    chain.assign(1, start);
    // diff = sum own(e_1..e_d) - sum cross(e_1,e_2..e_{d-1},e_d)
    auto dfs = [&](auto&& self, double diff) -> void {
      const int last = chain.back();
      if (chain.size() >= 2) {
        const double closed = diff - cross(last, start);  // sum own - sum cross
        double ownSum = 0.0;
        for (int e : chain) ownSum += own[size_t(e)];
        SlotWitness cand{chain, ownSum, ownSum - closed, closed};
        if (witnessLess(best, cand)) best = cand;
      }
      if (int(chain.size()) == K) return;
      const int remaining = K - int(chain.size());
      if (diff + double(remaining) * stepGain - minClose <= best.violation) return;
      for (int b = start; b < s; ++b) {  // root at the minimal slot index
        chain.push_back(b);
        self(self, diff + own[size_t(b)] - cross(last, b));
        chain.pop_back();
      }
    };
    dfs(dfs, own[size_t(start)]);
  }
  return best;
}

inline void checkBudget(std::size_t supportSize, int K) {
  if (K < 2) throw std::invalid_argument("cycle check: K must be >= 2");
  if (binomialGuard(supportSize, K) > 1e7)
    throw std::runtime_error("cycle check: combinatorial budget exceeded");
}

inline CycleCheckResult toResult(const SlotWitness& w,
                                 const std::vector<std::pair<Index, Index>>& pairs,
                                 double tol) {
  CycleCheckResult r;
  r.worst.lhs = w.lhs;
  r.worst.rhs = w.rhs;
  r.worst.violation = w.violation;
  for (int slot : w.slots) r.worst.indices.push_back(pairs[size_t(slot)]);
  r.monotone = !(w.violation > tol);
  return r;
}

}  // namespace detail

/// Cycle test of the max-form monotonicity inequality over the thresholded
/// support, up to cycle length K. The certificate is partial: it covers
/// cycle lengths <= K only.
inline CycleCheckResult checkInfCyclicalMonotonicity(const SupportSet& support,
                                                     const CostMatrix& cost, int K,
                                                     double tol = 1e-9) {
  detail::checkBudget(support.pairs.size(), K);
  if (support.pairs.empty())
    throw std::invalid_argument("cycle check: empty support");
  std::vector<double> own(support.pairs.size());
  for (size_t a = 0; a < support.pairs.size(); ++a)
    own[a] = cost.entries()(support.pairs[a].first, support.pairs[a].second);
  auto cross = [&](int a, int b) {
    return cost.entries()(support.pairs[size_t(a)].first, support.pairs[size_t(b)].second);
  };
  return detail::toResult(detail::worstMaxFormCycle(own, cross, K), support.pairs, tol);
}

/// Cycle test of the sum-form inequality (cycles suffice: permutations
/// decompose into cycles).
inline CycleCheckResult checkCCyclicalMonotonicity(const SupportSet& support,
                                                   const CostMatrix& cost, int K,
                                                   double tol = 1e-9) {
  detail::checkBudget(support.pairs.size(), K);
  if (support.pairs.empty())
    throw std::invalid_argument("cycle check: empty support");
  std::vector<double> own(support.pairs.size());
  for (size_t a = 0; a < support.pairs.size(); ++a)
    own[a] = cost.entries()(support.pairs[a].first, support.pairs[a].second);
  auto cross = [&](int a, int b) {
    return cost.entries()(support.pairs[size_t(a)].first, support.pairs[size_t(b)].second);
  };
  return detail::toResult(detail::worstSumFormCycle(own, cross, K), support.pairs, tol);
}

/// Multiplicative cycle identity satisfied by entropic minimizers: along any
/// cycle the density product equals exp(-cycle cost excess / eps) times the
/// shifted product. Returns the max relative mismatch over sampled cycles.
inline double invarianceResidual(const Coupling& gamma, const CostMatrix& cost, double p,
                                 double eps, int sampleCycles, int maxLen = 4,
                                 unsigned seed = 0) {
  if (gamma.entries().minCoeff() <= 0.0)
    throw std::invalid_argument("invarianceResidual: zero density encountered");
  if (maxLen < 2) throw std::invalid_argument("invarianceResidual: maxLen must be >= 2");
  const Index n = gamma.rows(), m = gamma.cols();
  Matrix logDensity(n, m), cp(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      logDensity(i, j) = std::log(gamma.entries()(i, j) /
                                  (gamma.mu().weights()[i] * gamma.nu().weights()[j]));
      cp(i, j) = std::pow(cost.entries()(i, j), p);
    }
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> lenDist(2, maxLen);
  std::uniform_int_distribution<Index> rowDist(0, n - 1), colDist(0, m - 1);
  double worst = 0.0;
  std::vector<std::pair<Index, Index>> cyc;
  for (int s = 0; s < sampleCycles; ++s) {
    const int k = lenDist(rng);
    cyc.clear();
    for (int t = 0; t < k; ++t) cyc.emplace_back(rowDist(rng), colDist(rng));
    double lhsLog = 0.0, rhsLog = 0.0;
    for (int t = 0; t < k; ++t) {
      const auto [i, j] = cyc[size_t(t)];
      const auto jn = cyc[size_t((t + 1) % k)].second;
      lhsLog += logDensity(i, j);
      rhsLog += -(cp(i, j) - cp(i, jn)) / eps + logDensity(i, jn);
    }
    worst = std::max(worst, 1.0 - std::exp(-std::abs(lhsLog - rhsLog)));
  }
  return worst;
}

/// Product-measure mass of a set of k-tuples whose cyclic c^p excess is at
/// least delta, against the bound exp(-delta/eps).
struct ExcessMassResult {
  double mass = 0.0;
  double bound = 1.0;

  bool holds(double slack = 0.0) const { return mass <= bound * (1.0 + slack); }
};

inline ExcessMassResult cycleExcessMassBound(
    const Coupling& gamma, const CostMatrix& cost, double p, double eps,
    const std::vector<std::vector<std::pair<Index, Index>>>& tuples, double delta) {
  if (delta < 0.0) throw std::invalid_argument("cycleExcessMassBound: delta must be >= 0");
  ExcessMassResult r;
  r.bound = std::exp(-delta / eps);
  for (const auto& tup : tuples) {
    if (tup.size() < 2)
      throw std::invalid_argument("cycleExcessMassBound: tuples must have k >= 2");
    double excess = 0.0;
    double prod = 1.0;
    for (size_t t = 0; t < tup.size(); ++t) {
      const auto [i, j] = tup[t];
      const auto jn = tup[(t + 1) % tup.size()].second;
      excess += std::pow(cost.entries()(i, j), p) - std::pow(cost.entries()(i, jn), p);
      prod *= gamma.entries()(i, j);
    }
    if (excess < delta - 1e-12 * std::max(1.0, std::abs(delta)))
      throw std::invalid_argument(
          "cycleExcessMassBound: tuple outside the excess-delta set");
    r.mass += prod;
  }
  return r;
}

/// Support of a (limit) plan with its coordinates, plus the solve it came
/// from — finite-p supports are only stand-ins for the limit object, so the
/// provenance is kept with every derived table.
struct SupportProvenance {
  double p = std::numeric_limits<double>::quiet_NaN();
  double eps = std::numeric_limits<double>::quiet_NaN();
  double tau = std::numeric_limits<double>::quiet_NaN();
};

struct SupportGeometry {
  Matrix xs;  // S x d
  Matrix ys;  // S x d
  SupportProvenance provenance;
};

inline SupportGeometry makeSupportGeometry(const SupportSet& support,
                                           const DiscreteMeasure& mu,
                                           const DiscreteMeasure& nu,
                                           SupportProvenance prov = {}) {
  SupportGeometry g;
  g.xs.resize(Index(support.pairs.size()), mu.dim());
  g.ys.resize(Index(support.pairs.size()), nu.dim());
  for (size_t a = 0; a < support.pairs.size(); ++a) {
    g.xs.row(Index(a)) = mu.points().row(support.pairs[a].first);
    g.ys.row(Index(a)) = nu.points().row(support.pairs[a].second);
  }
  g.provenance = prov;
  return g;
}

/// Rate functions over the grid spt(mu) x spt(nu), truncated at cycle/chain
/// length K: iInfTilde uses cyclic shifts, iInf permutations. Both are exact
/// within the cap. The support must itself pass the max-form cycle test at
/// K, which is verified first.
struct RateFunctionTable {
  Matrix iInf;
  Matrix iInfTilde;
  int cap = 0;
  SupportProvenance provenance;
};

inline RateFunctionTable rateFunctions(const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu,
                                       const SupportGeometry& support,
                                       const GroundCost& ground, int K) {
  if (K < 2 || K > 5) throw std::invalid_argument("rateFunctions: need 2 <= K <= 5");
  const int s = int(support.xs.rows());
  if (s == 0) throw std::invalid_argument("rateFunctions: empty support");
  const double budget =
      double(mu.size()) * double(nu.size()) * std::pow(double(s), K - 1);
  if (budget > 1e7) throw std::runtime_error("rateFunctions: combinatorial budget exceeded");

  std::vector<double> own(size_t(s));
  Matrix crossSS(s, s);
  for (int a = 0; a < s; ++a) {
    own[size_t(a)] = ground(support.xs.row(a).transpose(), support.ys.row(a).transpose());
    for (int b = 0; b < s; ++b)
      crossSS(a, b) = ground(support.xs.row(a).transpose(), support.ys.row(b).transpose());
  }
  auto supWorst = detail::worstMaxFormCycle(
      own, [&](int a, int b) { return crossSS(a, b); }, K);
  if (supWorst.violation > 1e-9)
    throw std::invalid_argument("rateFunctions: support fails the cycle pre-check");

  RateFunctionTable table;
  table.cap = K;
  table.provenance = support.provenance;
  table.iInf.resize(mu.size(), nu.size());
  table.iInfTilde.resize(mu.size(), nu.size());

  std::vector<int> chain;        // support slots s_2..s_k
  std::vector<int> permutation;  // for the permutation form
  for (Index qi = 0; qi < mu.size(); ++qi) {
    for (Index qj = 0; qj < nu.size(); ++qj) {
      const Vector qx = mu.points().row(qi).transpose();
      const Vector qy = nu.points().row(qj).transpose();
      const double ownQ = ground(qx, qy);
      std::vector<double> crossQy(size_t(s)), crossXq(size_t(s));
      for (int a = 0; a < s; ++a) {
        crossQy[size_t(a)] = ground(qx, support.ys.row(a).transpose());
        crossXq[size_t(a)] = ground(support.xs.row(a).transpose(), qy);
      }

      double tilde = -std::numeric_limits<double>::infinity();
      double ifull = 0.0;  // sigma = identity always available
      chain.clear();
      auto visit = [&](auto&& self) -> void {
        const int k = 1 + int(chain.size());
        if (k >= 2) {
          double ownMax = ownQ;
          for (int e : chain) ownMax = std::max(ownMax, own[size_t(e)]);
          // cyclic shift: q -> s2 -> ... -> sk -> q
          double shifted = crossQy[size_t(chain.front())];
          for (size_t t = 0; t + 1 < chain.size(); ++t)
            shifted = std::max(shifted, crossSS(chain[t], chain[t + 1]));
          shifted = std::max(shifted, crossXq[size_t(chain.back())]);
          tilde = std::max(tilde, ownMax - shifted);

          // permutations of the k elements (query is element 0)
          permutation.resize(size_t(k));
          for (int t = 0; t < k; ++t) permutation[size_t(t)] = t;
          auto pairCost = [&](int from, int to) {
            // cost between element `from`'s x and element `to`'s y
            if (from == 0 && to == 0) return ownQ;
            if (from == 0) return crossQy[size_t(chain[size_t(to - 1)])];
            if (to == 0) return crossXq[size_t(chain[size_t(from - 1)])];
            return crossSS(chain[size_t(from - 1)], chain[size_t(to - 1)]);
          };
          do {
            double assigned = -std::numeric_limits<double>::infinity();
            for (int t = 0; t < k; ++t)
              assigned = std::max(assigned, pairCost(t, permutation[size_t(t)]));
            ifull = std::max(ifull, ownMax - assigned);
          } while (std::next_permutation(permutation.begin(), permutation.end()));
        }
        if (k == K) return;
        for (int b = 0; b < s; ++b) {
          chain.push_back(b);
          self(self);
          chain.pop_back();
        }
      };
      visit(visit);

      table.iInfTilde(qi, qj) = tilde;
      table.iInf(qi, qj) = ifull;
    }
  }
  return table;
}

/// Decay trace of the plan mass on a fixed cell set as p grows at fixed eps:
/// emits (p, (eps/p) log gamma_{p,eps}(cell)) plus the rate-function target,
/// and checks the trace tail against target + slack.
struct DecayTrace {
  std::vector<std::pair<double, double>> trace;
  double target = 0.0;
  bool tailPass = false;
};

template <typename SolveReportT>
DecayTrace probeCellDecay(const std::vector<SolveReportT>& solves,
                          const std::vector<std::pair<Index, Index>>& cell,
                          const RateFunctionTable& table, const CostMatrix& cost,
                          double slack = 1e-2) {
  if (cost.entries().minCoeff() < 1.0)
    throw std::invalid_argument("probeCellDecay: requires cost >= 1");
  if (solves.empty()) throw std::invalid_argument("probeCellDecay: no solves");
  if (cell.empty()) throw std::invalid_argument("probeCellDecay: empty cell");
  DecayTrace out;
  double target = std::numeric_limits<double>::infinity();
  for (const auto& [i, j] : cell) target = std::min(target, table.iInfTilde(i, j));
  out.target = -target;
  double lastP = 0.0;
  for (const auto& rep : solves) {
    if (rep.p <= lastP)
      throw std::invalid_argument("probeCellDecay: solves must have increasing p");
    lastP = rep.p;
    double mass = 0.0;
    for (const auto& [i, j] : cell) mass += rep.coupling.entries()(i, j);
    if (mass <= 0.0) throw std::runtime_error("probeCellDecay: empty cell mass");
    out.trace.emplace_back(rep.p, rep.eps / rep.p * std::log(mass));
  }
  out.tailPass = true;
  for (size_t t = out.trace.size() / 2; t < out.trace.size(); ++t)
    if (out.trace[t].second > out.target + slack) out.tailPass = false;
  return out;
}

}  // namespace linfot
