#include "tscausal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace tscausal {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  if (line.empty()) cells.emplace_back();
  return cells;
}

void check_unique_names(const std::vector<std::string>& names, const std::string& context) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ValidationError(context + ": empty variable name");
    if (!seen.insert(n).second)
      throw ValidationError(context + ": duplicate variable name '" + n + "'");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

double TimeSeriesDataset::missing_fraction() const {
  if (mask.size() == 0) return 0.0;
  long missing = 0;
  for (Eigen::Index t = 0; t < mask.rows(); ++t)
    for (Eigen::Index i = 0; i < mask.cols(); ++i)
      if (!mask(t, i)) ++missing;
  return static_cast<double>(missing) / static_cast<double>(mask.size());
}

void TimeSeriesDataset::validate() const {
  if (values.rows() < 1 || values.cols() < 1)
    throw ValidationError("dataset must have T >= 1 and d >= 1");
  if (values.rows() != mask.rows() || values.cols() != mask.cols())
    throw ValidationError("values and mask shapes differ");
  if (static_cast<Eigen::Index>(var_names.size()) != values.cols())
    throw ValidationError("var_names length does not match column count");
  check_unique_names(var_names, "dataset");
}

std::vector<std::string> default_var_names(int d) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(d));
  for (int i = 1; i <= d; ++i) names.push_back("X" + std::to_string(i));
  return names;
}

LagWeightTensor LagWeightTensor::zero(int max_lag, int dim) {
  LagWeightTensor t;
  t.lags.assign(static_cast<size_t>(max_lag), Matrix::Zero(dim, dim));
  return t;
}

double LagWeightTensor::max_abs() const {
  double m = 0.0;
  for (const auto& w : lags) m = std::max(m, w.cwiseAbs().maxCoeff());
  return m;
}

bool LagWeightTensor::all_finite() const {
  for (const auto& w : lags)
    if (!w.allFinite()) return false;
  return true;
}

LagGraph LagGraph::empty(int max_lag, int dim) {
  LagGraph g;
  g.adjacency.assign(static_cast<size_t>(max_lag), BoolMatrix::Constant(dim, dim, false));
  g.summary = BoolMatrix::Constant(dim, dim, false);
  return g;
}

long LagGraph::edge_count() const {
  long n = 0;
  for (const auto& a : adjacency)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (a(i, j)) ++n;
  return n;
}

void LagGraph::refresh_summary() { summary = summarize(adjacency); }

BoolMatrix summarize(const std::vector<BoolMatrix>& adjacency) {
  if (adjacency.empty()) throw ValidationError("summarize: need at least one lag slice");
  const Eigen::Index d = adjacency.front().rows();
  for (const auto& a : adjacency)
    if (a.rows() != d || a.cols() != d)
      throw ValidationError("summarize: inconsistent slice shapes");
  BoolMatrix out = BoolMatrix::Constant(d, d, false);
  for (const auto& a : adjacency)
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (a(i, j)) out(i, j) = true;
  return out;
}

NoiseFamily noise_family_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "gaussian") return NoiseFamily::gaussian;
  if (l == "laplace") return NoiseFamily::laplace;
  if (l == "empirical") return NoiseFamily::empirical;
  throw ValidationError("unknown noise family: " + s);
}

std::string to_string(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::empirical: return "empirical";
  }
  return "gaussian";
}

NoiseModel NoiseModel::gaussian(double scale) {
  if (!(scale > 0.0)) throw ValidationError("gaussian noise requires scale > 0");
  return NoiseModel{NoiseFamily::gaussian, scale, {}};
}

NoiseModel NoiseModel::laplace(double scale) {
  if (!(scale > 0.0)) throw ValidationError("laplace noise requires scale > 0");
  return NoiseModel{NoiseFamily::laplace, scale, {}};
}

NoiseModel NoiseModel::empirical(std::vector<double> pool) {
  if (pool.empty()) throw ValidationError("empirical noise requires a non-empty residual pool");
  const double mean = std::accumulate(pool.begin(), pool.end(), 0.0) / static_cast<double>(pool.size());
  for (double& v : pool) v -= mean;
  return NoiseModel{NoiseFamily::empirical, 1.0, std::move(pool)};
}

double NoiseModel::sample(Rng& rng) const {
  switch (family) {
    case NoiseFamily::gaussian: return rng.normal(0.0, scale);
    case NoiseFamily::laplace: return rng.laplace(scale);
    case NoiseFamily::empirical:
      return residual_pool[rng.below(residual_pool.size())];
  }
  return 0.0;
}

TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);

  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> row_lines;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Blank lines are only decorative before the header. Afterwards an empty
    // line is a data row (a single-column dataset writes missing rows this way).
    if (!have_header && trim(line).empty()) continue;
    if (!line.empty() && line[0] == '#') continue;
    if (!have_header) {
      header = split_csv_line(line);
      for (auto& h : header) h = trim(h);
      have_header = true;
      continue;
    }
    rows.push_back(split_csv_line(line));
    row_lines.push_back(line_no);
  }
  if (!have_header) throw ValidationError("empty dataset: no header in " + path);
  if (rows.empty()) throw ValidationError("empty dataset: no data rows in " + path);

  const auto d = static_cast<Eigen::Index>(header.size());
  const auto T = static_cast<Eigen::Index>(rows.size());
  TimeSeriesDataset ds;
  ds.values = Matrix::Zero(T, d);
  ds.mask = BoolMatrix::Constant(T, d, true);
  ds.var_names = header;

  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& cells = rows[static_cast<size_t>(t)];
    if (static_cast<Eigen::Index>(cells.size()) != d) {
      throw ValidationError(path + ": line " + std::to_string(row_lines[static_cast<size_t>(t)]) +
                            " has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(d));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      const std::string cell = trim(cells[static_cast<size_t>(i)]);
      if (cell.empty()) {
        ds.mask(t, i) = false;
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ValidationError(path + ": line " + std::to_string(row_lines[static_cast<size_t>(t)]) +
                              ", column '" + header[static_cast<size_t>(i)] +
                              "': cannot parse '" + cell + "' as a real number");
      }
      ds.values(t, i) = v;
    }
  }
  ds.validate();
  return ds;
}

void save_csv(const TimeSeriesDataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << "# format_version: 1\n";
  for (Eigen::Index i = 0; i < dataset.cols(); ++i) {
    if (i) out << ',';
    out << dataset.var_names[static_cast<size_t>(i)];
  }
  out << '\n';
  for (Eigen::Index t = 0; t < dataset.rows(); ++t) {
    for (Eigen::Index i = 0; i < dataset.cols(); ++i) {
      if (i) out << ',';
      if (dataset.mask(t, i)) out << format_double(dataset.values(t, i));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

LoadedGraph load_graph(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.contains("max_lag") || !j.contains("var_names") || !j.contains("edges"))
    throw ValidationError(path + ": graph file needs max_lag, var_names and edges");
  const int max_lag = j.at("max_lag").get<int>();
  if (max_lag < 1) throw ValidationError(path + ": max_lag must be >= 1");
  const auto names = j.at("var_names").get<std::vector<std::string>>();
  if (names.empty()) throw ValidationError(path + ": var_names is empty");
  check_unique_names(names, path);

  const auto d = static_cast<int>(names.size());
  auto index_of = [&](const std::string& name) -> Eigen::Index {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
      throw ValidationError(path + ": unknown variable name '" + name + "'");
    return static_cast<Eigen::Index>(it - names.begin());
  };

  LoadedGraph out;
  out.graph = LagGraph::empty(max_lag, d);
  out.var_names = names;
  for (const auto& e : j.at("edges")) {
    const int lag = e.at("lag").get<int>();
    if (lag < 1 || lag > max_lag)
      throw ValidationError(path + ": edge lag " + std::to_string(lag) +
                            " outside [1, " + std::to_string(max_lag) + "]");
    const Eigen::Index target = index_of(e.at("target").get<std::string>());
    const Eigen::Index source = index_of(e.at("source").get<std::string>());
    out.graph.lag(lag)(target, source) = true;
  }
  out.graph.refresh_summary();
  return out;
}

void save_graph(const LagGraph& graph, const std::vector<std::string>& var_names,
                const std::string& path) {
  if (static_cast<Eigen::Index>(var_names.size()) != graph.dim())
    throw ValidationError("save_graph: var_names length does not match graph dimension");
  json edges = json::array();
  for (int tau = 1; tau <= graph.max_lag(); ++tau) {
    const auto& a = graph.lag(tau);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (a(i, j))
          edges.push_back({{"target", var_names[static_cast<size_t>(i)]},
                           {"source", var_names[static_cast<size_t>(j)]},
                           {"lag", tau}});
  }
  const json j = {{"format_version", 1},
                  {"max_lag", graph.max_lag()},
                  {"var_names", var_names},
                  {"edges", edges}};
  write_json_file(j, path);
}

LoadedWeights load_weights(const std::string& path) {
  const json j = read_json_file(path);
  const int max_lag = j.at("max_lag").get<int>();
  const auto names = j.at("var_names").get<std::vector<std::string>>();
  const auto d = static_cast<Eigen::Index>(names.size());
  const auto& w = j.at("weights");
  if (static_cast<int>(w.size()) != max_lag)
    throw ValidationError(path + ": weights tensor has wrong lag count");
  LoadedWeights out;
  out.var_names = names;
  out.weights = LagWeightTensor::zero(max_lag, static_cast<int>(d));
  for (int tau = 1; tau <= max_lag; ++tau) {
    const auto& slice = w.at(static_cast<size_t>(tau - 1));
    if (static_cast<Eigen::Index>(slice.size()) != d)
      throw ValidationError(path + ": weight slice has wrong row count");
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& row = slice.at(static_cast<size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != d)
        throw ValidationError(path + ": weight slice has wrong column count");
      for (Eigen::Index jj = 0; jj < d; ++jj)
        out.weights.lag(tau)(i, jj) = row.at(static_cast<size_t>(jj)).get<double>();
    }
  }
  if (!out.weights.all_finite()) throw ValidationError(path + ": non-finite weight entry");
  return out;
}

void save_weights(const LagWeightTensor& weights, const std::vector<std::string>& var_names,
                  const std::string& path) {
  if (static_cast<Eigen::Index>(var_names.size()) != weights.dim())
    throw ValidationError("save_weights: var_names length does not match tensor dimension");
  json w = json::array();
  for (int tau = 1; tau <= weights.max_lag(); ++tau) {
    json slice = json::array();
    const auto& m = weights.lag(tau);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      slice.push_back(std::move(row));
    }
    w.push_back(std::move(slice));
  }
  const json j = {{"format_version", 1},
                  {"max_lag", weights.max_lag()},
                  {"var_names", var_names},
                  {"weights", w}};
  write_json_file(j, path);
}

}  // namespace tscausal
