#pragma once

#include "linfot/bottleneck.hpp"
#include "linfot/measures.hpp"
#include "linfot/sinkhorn.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>

namespace linfot {

using Json = nlohmann::json;

inline Json measureToJson(const DiscreteMeasure& m) {
  Json jpoints = Json::array();
  for (Index i = 0; i < m.size(); ++i) {
    Json row = Json::array();
    for (Index d = 0; d < m.dim(); ++d) row.push_back(m.points()(i, d));
    jpoints.push_back(std::move(row));
  }
  Json jweights = Json::array();
  for (Index i = 0; i < m.size(); ++i) jweights.push_back(m.weights()[i]);
  return Json{{"points", std::move(jpoints)}, {"weights", std::move(jweights)}};
}

inline DiscreteMeasure measureFromJson(const Json& j) {
  const auto& jp = j.at("points");
  const auto& jw = j.at("weights");
  if (jp.empty()) throw std::invalid_argument("instance: empty points");
  Matrix pts(Index(jp.size()), Index(jp.at(0).size()));
  for (size_t i = 0; i < jp.size(); ++i) {
    if (Index(jp.at(i).size()) != pts.cols())
      throw std::invalid_argument("instance: ragged point list");
    for (size_t d = 0; d < jp.at(i).size(); ++d)
      pts(Index(i), Index(d)) = jp.at(i).at(d).get<double>();
  }
  Vector w(Index(jw.size()));
  for (size_t i = 0; i < jw.size(); ++i) w[Index(i)] = jw.at(i).get<double>();
  return DiscreteMeasure(std::move(pts), std::move(w));
}

inline std::string metricName(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "chebyshev";
}

inline Metric metricFromName(const std::string& s) {
  if (s == "euclidean") return Metric::Euclidean;
  if (s == "chebyshev") return Metric::Chebyshev;
  throw std::invalid_argument("unknown metric: " + s);
}

inline Json instanceToJson(const Instance& inst) {
  return Json{{"mu", measureToJson(inst.mu)},
              {"nu", measureToJson(inst.nu)},
              {"metric", metricName(inst.metric)},
              {"rescale", Json{{"scale", inst.rescale.scale}, {"shift", inst.rescale.shift}}}};
}

inline Instance instanceFromJson(const Json& j) {
  Instance inst{measureFromJson(j.at("mu")), measureFromJson(j.at("nu")),
                metricFromName(j.at("metric").get<std::string>()), Rescale{}};
  if (j.contains("rescale")) {
    inst.rescale.scale = j.at("rescale").value("scale", 1.0);
    inst.rescale.shift = j.at("rescale").value("shift", 0.0);
  }
  return inst;
}

// Dense row-major serialization with marginal checksums; the checksums are
// revalidated against the declared marginals on load.
inline Json couplingToJson(const Coupling& g) {
  Json entries = Json::array();
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) entries.push_back(g.entries()(i, j));
  Json rowSums = Json::array(), colSums = Json::array();
  Vector rs = g.entries().rowwise().sum();
  Vector cs = g.entries().colwise().sum().transpose();
  for (Index i = 0; i < g.rows(); ++i) rowSums.push_back(rs[i]);
  for (Index j = 0; j < g.cols(); ++j) colSums.push_back(cs[j]);
  return Json{{"rows", g.rows()},
              {"cols", g.cols()},
              {"entries", std::move(entries)},
              {"rowSums", std::move(rowSums)},
              {"colSums", std::move(colSums)}};
}

inline Coupling couplingFromJson(const Json& j, const DiscreteMeasure& mu,
                                 const DiscreteMeasure& nu) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& flat = j.at("entries");
  if (Index(flat.size()) != rows * cols)
    throw std::invalid_argument("coupling: entry count mismatch");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index jj = 0; jj < cols; ++jj)
      m(i, jj) = flat.at(size_t(i * cols + jj)).get<double>();
  const auto& rsum = j.at("rowSums");
  const auto& csum = j.at("colSums");
  for (Index i = 0; i < rows; ++i)
    if (std::abs(m.row(i).sum() - rsum.at(size_t(i)).get<double>()) > 1e-9)
      throw std::invalid_argument("coupling: row checksum mismatch");
  for (Index jj = 0; jj < cols; ++jj)
    if (std::abs(m.col(jj).sum() - csum.at(size_t(jj)).get<double>()) > 1e-9)
      throw std::invalid_argument("coupling: column checksum mismatch");
  return Coupling(std::move(m), mu, nu);
}

inline Json solveReportToJson(const SolveReport& r, bool includePlan = true) {
  Json j{{"value", r.value},
         {"entropy", r.entropyValue},
         {"iterations", r.iterations},
         {"converged", r.converged},
         {"p", r.p},
         {"eps", r.eps},
         {"marginalErrL1", Json::array({r.marginalErrL1.first, r.marginalErrL1.second})},
         {"marginalErrMax", Json::array({r.marginalErrMax.first, r.marginalErrMax.second})},
         {"mode", r.modeUsed == SolveMode::Standard ? "standard" : "logDomain"}};
  if (includePlan) j["coupling"] = couplingToJson(r.coupling);
  return j;
}

inline Json oracleToJson(const BottleneckResult& r, const CostMatrix& cost) {
  Json support = Json::array();
  for (Index i = 0; i < r.witnessPlan.rows(); ++i)
    for (Index j = 0; j < r.witnessPlan.cols(); ++j)
      if (r.witnessPlan.entries()(i, j) > 0.0)
        support.push_back(Json::array({i, j, r.witnessPlan.entries()(i, j)}));
  return Json{{"value", r.value},
              {"criticalPair", Json::array({r.criticalPair.first, r.criticalPair.second})},
              {"criticalCost", cost.entries()(r.criticalPair.first, r.criticalPair.second)},
              {"witnessSupport", std::move(support)}};
}

inline Json loadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

inline void saveJson(const Json& j, const std::string& path, int indent = 1) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(indent) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline Instance loadInstance(const std::string& path) {
  return instanceFromJson(loadJson(path));
}

}  // namespace linfot
