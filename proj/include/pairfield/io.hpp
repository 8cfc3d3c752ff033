#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/optimizer.hpp"
#include "pairfield/sampler.hpp"

namespace pairfield {

using json = nlohmann::json;

inline constexpr const char* kLibraryVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Atomic file writes: temp file in the target directory, then rename.

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("atomic_write_text: cannot open " + tmp.string());
    out << content;
    if (!out) throw InvalidArgument("atomic_write_text: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("read_text: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---------------------------------------------------------------------------
// Numbers: shortest round-trippable decimal text.

inline std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

inline double parse_double(const std::string& s) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    throw InvalidArgument("parse_double: bad number '" + s + "'");
  return value;
}

// ---------------------------------------------------------------------------
// CSV matrices.

inline std::string matrix_to_csv(const MatrixXd& m, const std::vector<std::string>& header) {
  if (static_cast<int>(header.size()) != m.cols())
    throw InvalidArgument("matrix_to_csv: header length mismatch");
  std::ostringstream out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << ',';
    out << header[c];
  }
  out << '\n';
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

struct CsvMatrix {
  std::vector<std::string> header;
  MatrixXd values;
};

inline CsvMatrix csv_to_matrix(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv_to_matrix: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvMatrix out;
  {
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) out.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) values.push_back(parse_double(cell));
    if (values.size() != out.header.size())
      throw InvalidArgument("csv_to_matrix: ragged row");
    rows.push_back(std::move(values));
  }
  out.values.resize(static_cast<int>(rows.size()), static_cast<int>(out.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.values(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return out;
}

inline std::vector<std::string> numbered_header(const std::string& prefix, int count) {
  std::vector<std::string> header;
  header.reserve(count);
  for (int k = 1; k <= count; ++k) header.push_back(prefix + std::to_string(k));
  return header;
}

inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  atomic_write_text(path, matrix_to_csv(data.X, numbered_header("x", data.p())));
}

// ---------------------------------------------------------------------------
// JSON helpers. Doubles survive round trips exactly (shortest representation
// both ways).

inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) rows.push_back(m(i, j));
  return rows;
}

inline MatrixXd matrix_from_json(const json& j, int rows, int cols) {
  if (static_cast<int>(j.size()) != rows * cols)
    throw InvalidArgument("matrix_from_json: size mismatch");
  MatrixXd m(rows, cols);
  int k = 0;
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[k++].get<double>();
  return m;
}

inline json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

inline json bounds_to_json(const Bounds& b) {
  return json{{"alpha", b.alpha}, {"beta", b.beta}, {"x_max", b.x_max}};
}

inline Bounds bounds_from_json(const json& j) {
  Bounds b;
  b.alpha = j.at("alpha").get<double>();
  b.beta = j.at("beta").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.check();
  return b;
}

inline json dims_to_json(const Dims& d) {
  return json{{"p_v", d.p_v}, {"p_a", d.p_a}, {"p_y", d.p_y}, {"n", d.n}};
}

inline Dims dims_from_json(const json& j) {
  Dims d;
  d.p_v = j.at("p_v").get<int>();
  d.p_a = j.at("p_a").get<int>();
  d.p_y = j.at("p_y").get<int>();
  d.n = j.at("n").get<int>();
  d.check();
  return d;
}

inline json fit_config_to_json(const FitConfig& c) {
  return json{{"max_iters", c.max_iters},
              {"step_init", c.step_init},
              {"tol_grad", c.tol_grad},
              {"tol_obj", c.tol_obj},
              {"backtrack_factor", c.backtrack_factor},
              {"dykstra_rounds", c.dykstra_rounds},
              {"seed", c.seed}};
}

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
  if (j.contains("step_init")) c.step_init = j.at("step_init").get<double>();
  if (j.contains("tol_grad")) c.tol_grad = j.at("tol_grad").get<double>();
  if (j.contains("tol_obj")) c.tol_obj = j.at("tol_obj").get<double>();
  if (j.contains("backtrack_factor")) c.backtrack_factor = j.at("backtrack_factor").get<double>();
  if (j.contains("dykstra_rounds")) c.dykstra_rounds = j.at("dykstra_rounds").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.check();
  return c;
}

inline json gibbs_config_to_json(const GibbsConfig& c) {
  return json{{"burn_in", c.burn_in},
              {"thin", c.thin},
              {"seed", c.seed},
              {"grid_nodes", c.grid_nodes}};
}

inline GibbsConfig gibbs_config_from_json(const json& j) {
  GibbsConfig c;
  if (j.contains("burn_in")) c.burn_in = j.at("burn_in").get<int>();
  if (j.contains("thin")) c.thin = j.at("thin").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("grid_nodes")) c.grid_nodes = j.at("grid_nodes").get<int>();
  c.check();
  return c;
}

inline json fit_report_to_json(const FitReport& r) {
  return json{{"iterations", r.iterations},
              {"final_loss", r.final_loss},
              {"grad_map_norm", r.grad_map_norm},
              {"feasible", r.feasible},
              {"stop_reason", r.stop_reason},
              {"loss_trace", r.trace}};
}

/// Flat schema carrying the fitted parameters with their bounds and layout:
/// keys alpha, beta, x_max, p_v, p_a, p_y, n, theta (row-major p x p),
/// unit_fields (row-major n x p).
inline json fit_to_json(const ExtendedParams& params, const Dims& dims, const Bounds& bounds) {
  json j = bounds_to_json(bounds);
  j.update(dims_to_json(dims));
  j["theta"] = matrix_to_json(params.population.mat());
  j["unit_fields"] = matrix_to_json(params.units.rows);
  return j;
}

struct FitFile {
  ExtendedParams params;
  Dims dims;
  Bounds bounds;
};

inline FitFile fit_from_json(const json& j) {
  FitFile f;
  f.bounds = bounds_from_json(j);
  f.dims = dims_from_json(j);
  const int p = f.dims.p();
  f.params = ExtendedParams(PopulationMatrix(matrix_from_json(j.at("theta"), p, p)),
                            matrix_from_json(j.at("unit_fields"), f.dims.n, p));
  return f;
}

/// Flat schema for generator truth: alpha, beta, x_max, p_v, p_a, p_y, n,
/// phi, Phi (row-major), delta_v (row-major n x p_v), clean_mask, kappa.
inline json sim_truth_to_json(const SimTruth& truth, const Dims& dims, const Bounds& bounds) {
  json j = bounds_to_json(bounds);
  j.update(dims_to_json(dims));
  j["phi"] = vector_to_json(truth.joint.phi);
  j["Phi"] = matrix_to_json(truth.joint.Phi);
  j["delta_v"] = matrix_to_json(truth.delta_v);
  j["clean_mask"] = truth.clean_mask;
  j["kappa"] = truth.kappa;
  return j;
}

inline SimTruth sim_truth_from_json(const json& j) {
  const Dims dims = dims_from_json(j);
  SimTruth truth;
  truth.joint.phi = vector_from_json(j.at("phi"));
  truth.joint.Phi = matrix_from_json(j.at("Phi"), dims.p(), dims.p());
  truth.delta_v = matrix_from_json(j.at("delta_v"), dims.n, dims.p_v);
  truth.clean_mask = j.at("clean_mask").get<std::vector<std::uint8_t>>();
  truth.kappa = j.at("kappa").get<double>();
  return truth;
}

inline json joint_params_to_json(const JointParams& params) {
  return json{{"phi", vector_to_json(params.phi)}, {"Phi", matrix_to_json(params.Phi)}};
}

inline JointParams joint_params_from_json(const json& j) {
  JointParams params;
  params.phi = vector_from_json(j.at("phi"));
  params.Phi = matrix_from_json(j.at("Phi"), params.p(), params.p());
  params.check_shapes();
  return params;
}

}  // namespace pairfield
