#pragma once

#include "linfot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace linfot {

enum class SolveMode { Standard, LogDomain, Auto };

struct SolverConfig {
  double p = 2.0;
  double eps = 1.0;
  int maxIter = 50000;
  double tol = 1e-5;  // L1 marginal-error stopping threshold, both marginals
  SolveMode mode = SolveMode::Auto;
  bool recordObjective = false;

  void validate() const {
    if (p < 1.0) throw std::invalid_argument("SolverConfig: p must be >= 1");
    if (eps <= 0.0) throw std::invalid_argument("SolverConfig: eps must be > 0");
    if (maxIter < 1) throw std::invalid_argument("SolverConfig: maxIter must be >= 1");
    if (tol <= 0.0) throw std::invalid_argument("SolverConfig: tol must be > 0");
  }
};

struct SolveReport {
  Coupling coupling;
  double value = 0.0;         // J_{p,eps} at the output plan
  double entropyValue = 0.0;  // H(gamma | mu x nu)
  int iterations = 0;         // row+column scaling pairs performed
  std::pair<double, double> marginalErrL1{0.0, 0.0};
  std::pair<double, double> marginalErrMax{0.0, 0.0};
  bool converged = false;
  SolveMode modeUsed = SolveMode::Standard;
  double p = 0.0;
  double eps = 0.0;
  std::vector<double> objectiveTrace;  // filled when config.recordObjective
};

namespace detail {

// Streamed log-sum-exp with a running max; no shifted temporaries.
class LogSumExp {
 public:
  void add(double t) {
    if (t == -std::numeric_limits<double>::infinity()) return;
    if (t > max_) {
      sum_ = sum_ * std::exp(max_ - t) + 1.0;
      max_ = t;
    } else {
      sum_ += std::exp(t - max_);
    }
  }
  double value() const {
    if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

inline SolveReport finalizeReport(Matrix gamma, const DiscreteMeasure& mu,
                                  const DiscreteMeasure& nu, const CostMatrix& cost,
                                  const SolverConfig& config, int iterations,
                                  SolveMode modeUsed, std::vector<double> trace) {
  Coupling plan(std::move(gamma), mu, nu);
  SolveReport r{std::move(plan)};
  r.iterations = iterations;
  r.modeUsed = modeUsed;
  r.p = config.p;
  r.eps = config.eps;
  r.marginalErrL1 = marginalErrorsL1(r.coupling);
  r.marginalErrMax = marginalErrorsMax(r.coupling);
  r.converged = r.marginalErrL1.first <= config.tol && r.marginalErrL1.second <= config.tol;
  r.entropyValue = entropy(r.coupling);
  r.value = evalJpe(r.coupling, cost, config.p, config.eps);
  r.objectiveTrace = std::move(trace);
  return r;
}

// One-row or one-column marginals leave a single feasible plan.
inline std::optional<SolveReport> trivialSolve(const DiscreteMeasure& mu,
                                               const DiscreteMeasure& nu,
                                               const CostMatrix& cost,
                                               const SolverConfig& config,
                                               SolveMode modeUsed) {
  if (mu.size() > 1 && nu.size() > 1) return std::nullopt;
  Matrix g;
  if (mu.size() == 1)
    g = nu.weights().transpose();
  else
    g = mu.weights();
  return finalizeReport(std::move(g), mu, nu, cost, config, 0, modeUsed, {});
}

}  // namespace detail

/// Standard Sinkhorn on the Gibbs kernel K = exp(-c^p/eps). Throws if the
/// kernel underflows to an all-zero row or column.
inline SolveReport solveStandard(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                 const CostMatrix& cost, const SolverConfig& config) {
  config.validate();
  if (!cost.entries().allFinite())
    throw std::invalid_argument("solve: cost entries must be finite");
  if (auto r = detail::trivialSolve(mu, nu, cost, config, SolveMode::Standard)) return *r;

  const Index n = mu.size(), m = nu.size();
  // Measure-weighted kernel: gamma = diag(u) Khat diag(v), Khat_ij = mu_i nu_j K_ij.
  Matrix khat(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      khat(i, j) = mu.weights()[i] * nu.weights()[j] *
                   std::exp(-std::pow(cost.entries()(i, j), config.p) / config.eps);
  for (Index i = 0; i < n; ++i)
    if (khat.row(i).maxCoeff() == 0.0)
      throw std::runtime_error("solveStandard: Gibbs kernel underflow (all-zero row)");
  for (Index j = 0; j < m; ++j)
    if (khat.col(j).maxCoeff() == 0.0)
      throw std::runtime_error("solveStandard: Gibbs kernel underflow (all-zero column)");

  Vector u = Vector::Ones(n), v = Vector::Ones(m);
  std::vector<double> trace;
  int it = 0;
  bool converged = false;
  Matrix gamma;
  while (it < config.maxIter) {
    u = mu.weights().cwiseQuotient(khat * v);
    v = nu.weights().cwiseQuotient(khat.transpose() * u);
    if (!u.allFinite() || !v.allFinite())
      throw std::runtime_error("solveStandard: scaling overflow (kernel too stiff)");
    ++it;
    gamma = u.asDiagonal() * khat * v.asDiagonal();
    double er = (gamma.rowwise().sum() - mu.weights()).cwiseAbs().sum();
    double ec = (gamma.colwise().sum().transpose() - nu.weights()).cwiseAbs().sum();
    if (config.recordObjective)
      trace.push_back(evalJpe(Coupling(gamma, mu, nu), cost, config.p, config.eps));
    if (er <= config.tol && ec <= config.tol) {
      converged = true;
      break;
    }
  }
  (void)converged;
  return detail::finalizeReport(std::move(gamma), mu, nu, cost, config, it,
                                SolveMode::Standard, std::move(trace));
}

/// Log-domain Sinkhorn on the potentials of log(dgamma/d(mu x nu)); handles
/// c^p/eps over thousands of orders of magnitude.
inline SolveReport solveLogDomain(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const CostMatrix& cost, const SolverConfig& config) {
  config.validate();
  if (!cost.entries().allFinite())
    throw std::invalid_argument("solve: cost entries must be finite");
  if (auto r = detail::trivialSolve(mu, nu, cost, config, SolveMode::LogDomain)) return *r;

  const Index n = mu.size(), m = nu.size();
  // a_ij = -c_ij^p/eps + log mu_i + log nu_j; log gamma = a + (f_i + g_j)/eps.
  Matrix a(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      a(i, j) = -std::pow(cost.entries()(i, j), config.p) / config.eps +
                std::log(mu.weights()[i]) + std::log(nu.weights()[j]);

  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  std::vector<double> trace;
  Matrix gamma(n, m);
  int it = 0;
  bool converged = false;
  while (it < config.maxIter) {
    for (Index i = 0; i < n; ++i) {
      detail::LogSumExp lse;
      for (Index j = 0; j < m; ++j) lse.add(a(i, j) + f[i] + g[j]);
      f[i] += std::log(mu.weights()[i]) - lse.value();
    }
    for (Index j = 0; j < m; ++j) {
      detail::LogSumExp lse;
      for (Index i = 0; i < n; ++i) lse.add(a(i, j) + f[i] + g[j]);
      g[j] += std::log(nu.weights()[j]) - lse.value();
    }
    ++it;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) gamma(i, j) = std::exp(a(i, j) + f[i] + g[j]);
    double er = (gamma.rowwise().sum() - mu.weights()).cwiseAbs().sum();
    double ec = (gamma.colwise().sum().transpose() - nu.weights()).cwiseAbs().sum();
    if (config.recordObjective)
      trace.push_back(evalJpe(Coupling(gamma, mu, nu), cost, config.p, config.eps));
    if (er <= config.tol && ec <= config.tol) {
      converged = true;
      break;
    }
  }
  (void)converged;
  return detail::finalizeReport(std::move(gamma), mu, nu, cost, config, it,
                                SolveMode::LogDomain, std::move(trace));
}

/// Entropic solve of min sum(gamma c^p) + eps H(gamma|mu x nu) over plans.
/// Auto mode runs the standard kernel when it cannot underflow
/// (max(c^p)/eps <= 700) and falls back to the log-domain form otherwise.
inline SolveReport solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const CostMatrix& cost, const SolverConfig& config) {
  config.validate();
  switch (config.mode) {
    case SolveMode::Standard:
      return solveStandard(mu, nu, cost, config);
    case SolveMode::LogDomain:
      return solveLogDomain(mu, nu, cost, config);
    case SolveMode::Auto:
      break;
  }
  const double maxExponent =
      std::pow(cost.entries().maxCoeff(), config.p) / config.eps;
  if (maxExponent > 700.0)  // exp underflow bound for double precision
    return solveLogDomain(mu, nu, cost, config);
  try {
    return solveStandard(mu, nu, cost, config);
  } catch (const std::runtime_error&) {
    return solveLogDomain(mu, nu, cost, config);
  }
}

/// Regularization schedule eps_p, queryable at any p.
class EpsSchedule {
 public:
  enum class Rule { Constant, PowerDecay, Geometric, Custom };

  static EpsSchedule constant(double eps) {
    return EpsSchedule(Rule::Constant, eps, 0.0, {});
  }
  // eps_p = eps0 * p^{-alpha}
  static EpsSchedule powerDecay(double eps0, double alpha) {
    return EpsSchedule(Rule::PowerDecay, eps0, alpha, {});
  }
  // eps_p = eps0 * r^p
  static EpsSchedule geometric(double eps0, double r) {
    return EpsSchedule(Rule::Geometric, eps0, r, {});
  }
  static EpsSchedule custom(std::vector<std::pair<double, double>> values) {
    return EpsSchedule(Rule::Custom, 0.0, 0.0, std::move(values));
  }

  double at(double p) const {
    double e = 0.0;
    switch (rule_) {
      case Rule::Constant:
        e = eps0_;
        break;
      case Rule::PowerDecay:
        e = eps0_ * std::pow(p, -param_);
        break;
      case Rule::Geometric:
        e = eps0_ * std::pow(param_, p);
        break;
      case Rule::Custom: {
        for (const auto& [pp, ee] : custom_)
          if (pp == p) return ee;
        throw std::invalid_argument("EpsSchedule: no custom value at this p");
      }
    }
    if (!(e > 0.0)) throw std::domain_error("EpsSchedule: eps_p must be > 0");
    return e;
  }

  Rule rule() const { return rule_; }

 private:
  EpsSchedule(Rule rule, double eps0, double param,
              std::vector<std::pair<double, double>> custom)
      : rule_(rule), eps0_(eps0), param_(param), custom_(std::move(custom)) {}

  Rule rule_;
  double eps0_;
  double param_;
  std::vector<std::pair<double, double>> custom_;
};

/// Finite-sample schedule diagnostics over a p-range:
///   epsRoot    = eps_p^{1/p}
///   inflationRate  = (1/p) log(1 + eps_p log(p) / (1+lambda)^p)
///   growthRatio= eps_p / (p (1+lambda)^p)
/// Each is tested for monotone decrease over the tail (last half) of pRange;
/// epsRoot additionally must end at a value <= 1, otherwise a constant
/// eps_p = (1+lambda)^p would slip through.
struct ScheduleReport {
  std::vector<double> p;
  std::vector<double> epsRoot;
  std::vector<double> inflationRate;
  std::vector<double> growthRatio;
  bool epsRootOk = false;
  bool inflationRateOk = false;
  bool growthRatioOk = false;
};

inline ScheduleReport validateSchedule(const EpsSchedule& schedule, double lambda,
                                       const std::vector<double>& pRange) {
  if (pRange.empty()) throw std::invalid_argument("validateSchedule: empty pRange");
  if (lambda < 0.0) throw std::invalid_argument("validateSchedule: lambda must be >= 0");
  ScheduleReport r;
  for (double p : pRange) {
    const double e = schedule.at(p);
    r.p.push_back(p);
    r.epsRoot.push_back(std::pow(e, 1.0 / p));
    r.inflationRate.push_back(std::log1p(e * std::log(p) / std::pow(1.0 + lambda, p)) / p);
    r.growthRatio.push_back(e / (p * std::pow(1.0 + lambda, p)));
  }
  auto decreasingTail = [](const std::vector<double>& v) {
    const size_t start = v.size() / 2;
    for (size_t k = start + 1; k < v.size(); ++k)
      if (v[k] > v[k - 1] * (1.0 + 1e-12) + 1e-300) return false;
    return true;
  };
  r.epsRootOk = decreasingTail(r.epsRoot) && r.epsRoot.back() <= 1.0 + 1e-12;
  r.inflationRateOk = decreasingTail(r.inflationRate);
  r.growthRatioOk = decreasingTail(r.growthRatio);
  return r;
}

/// Entropy collapse of the eps = 1/p schedule on costs with max <= 1/2: the
/// minimizer's entropy is bounded by p 2^{-p} and the plan drifts to the
/// product measure.
struct DegenerateRecord {
  double p;
  double entropyValue;
  double bound;  // p * 2^{-p}
  Coupling coupling;
};

inline std::vector<DegenerateRecord> runDegenerateSchedule(
    const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
    const std::vector<double>& pList, double tol = 1e-9) {
  if (cost.entries().maxCoeff() > 0.5)
    throw std::invalid_argument("runDegenerateSchedule: requires max cost <= 1/2");
  std::vector<DegenerateRecord> out;
  for (double p : pList) {
    SolverConfig cfg;
    cfg.p = p;
    cfg.eps = 1.0 / p;
    cfg.tol = tol;
    cfg.mode = SolveMode::Auto;
    SolveReport rep = solve(mu, nu, cost, cfg);
    out.push_back({p, rep.entropyValue, p * std::pow(2.0, -p), std::move(rep.coupling)});
  }
  return out;
}

}  // namespace linfot
