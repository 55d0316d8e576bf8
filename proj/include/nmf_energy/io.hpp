#ifndef NMF_ENERGY_IO_HPP
#define NMF_ENERGY_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "instance.hpp"
#include "matrix.hpp"
#include "nmf.hpp"
#include "polynomial.hpp"
#include "quardp.hpp"
#include "qubo.hpp"
#include "solver.hpp"

namespace nmf_energy {

using Json = nlohmann::json;

/// Round-trip text for a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- Matrix ---------------------------------------------------------------

inline void to_json(Json& j, const Matrix& m) { j = m.to_rows(); }

inline void from_json(const Json& j, Matrix& m) {
  if (!j.is_array()) throw FormatError("matrix: expected an array of rows");
  m = Matrix::from_rows(j.get<std::vector<std::vector<double>>>());
}

inline void to_json(Json& j, const FactorPair& f) { j = {{"W", f.W}, {"H", f.H}}; }

inline void from_json(const Json& j, FactorPair& f) {
  f.W = j.at("W").get<Matrix>();
  f.H = j.at("H").get<Matrix>();
}

/// Matrix CSV: one row per line, no header.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline Matrix read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos)
          throw FormatError("matrix CSV: bad number '" + cell + "'");
      } catch (const std::logic_error&) {
        throw FormatError("matrix CSV: bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("matrix CSV: row " + std::to_string(rows.size() + 1) + " has " +
                        std::to_string(row.size()) + " cells, expected " +
                        std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("matrix CSV: no rows");
  return Matrix::from_rows(rows);
}

// ---- Instances ------------------------------------------------------------

inline void to_json(Json& j, const ValueDomain& d) {
  if (d.is_integer())
    j = {{"kind", "integer"}, {"levels", d.levels}};
  else
    j = {{"kind", "continuous"}, {"low", d.low}, {"high", d.high}};
}

inline void from_json(const Json& j, ValueDomain& d) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "integer")
    d = ValueDomain::integer(j.at("levels").get<int>());
  else if (kind == "continuous")
    d = ValueDomain::continuous(j.value("low", 0.0), j.value("high", 1.0));
  else
    throw FormatError("domain: unknown kind '" + kind + "'");
}

inline void to_json(Json& j, const ProblemInstance& inst) {
  j = {{"n", inst.n},         {"m", inst.m},      {"p", inst.p},
       {"domain", inst.domain}, {"seed", inst.seed}, {"case_id", inst.case_id},
       {"V", inst.V}};
  if (inst.planted) j["planted"] = *inst.planted;
}

inline void from_json(const Json& j, ProblemInstance& inst) {
  inst.n = j.at("n").get<std::size_t>();
  inst.m = j.at("m").get<std::size_t>();
  inst.p = j.at("p").get<std::size_t>();
  inst.domain = j.at("domain").get<ValueDomain>();
  inst.seed = j.value("seed", std::uint64_t{0});
  inst.case_id = j.value("case_id", std::string{});
  inst.V = j.at("V").get<Matrix>();
  if (inst.V.rows() != inst.n || inst.V.cols() != inst.m)
    throw FormatError("instance: V shape does not match (n, m)");
  inst.planted.reset();
  if (j.contains("planted")) inst.planted = j.at("planted").get<FactorPair>();
}

// ---- Polynomials and models -------------------------------------------------

inline void to_json(Json& j, const MultilinearPoly& poly) {
  Json terms = Json::array();
  for (const auto& [mono, c] : poly.terms()) {
    std::vector<VarIndex> vars(mono.vars().begin(), mono.vars().end());
    terms.push_back({{"vars", vars}, {"coeff", c}});
  }
  j = {{"num_vars", poly.num_vars()}, {"offset", poly.offset()}, {"terms", terms}};
}

inline void from_json(const Json& j, MultilinearPoly& poly) {
  poly = MultilinearPoly(j.at("num_vars").get<std::size_t>(),
                         j.value("offset", 0.0));
  for (const auto& t : j.at("terms")) {
    const auto vars = t.at("vars").get<std::vector<VarIndex>>();
    if (vars.empty() || vars.size() > kMaxDegree)
      throw FormatError("polynomial: term degree must be 1.." +
                        std::to_string(kMaxDegree));
    for (VarIndex v : vars)
      if (v >= poly.num_vars())
        throw FormatError("polynomial: variable index out of range");
    poly.add_term(Monomial(std::span<const VarIndex>(vars)), t.at("coeff").get<double>());
  }
}

inline void to_json(Json& j, const VariableLayout& l) {
  j = {{"n", l.n()}, {"m", l.m()}, {"p", l.p()}, {"with_slack", l.with_slack()}};
}

inline void from_json(const Json& j, VariableLayout& l) {
  l = VariableLayout(j.at("n").get<std::size_t>(), j.at("m").get<std::size_t>(),
                     j.at("p").get<std::size_t>(), j.value("with_slack", true));
}

/// Polynomial fields at top level, plus layout, R and case_id.
inline void to_json(Json& j, const QuardpModel& model) {
  j = model.poly;
  j["kind"] = "quardp";
  j["layout"] = model.layout;
  j["R"] = model.R;
  j["case_id"] = model.case_id;
}

inline void from_json(const Json& j, QuardpModel& model) {
  model.poly = j.get<MultilinearPoly>();
  model.layout = j.at("layout").get<VariableLayout>();
  model.R = j.at("R").get<double>();
  model.case_id = j.value("case_id", std::string{});
  if (model.layout.total_vars() != model.poly.num_vars())
    throw FormatError("quardp model: layout does not match num_vars");
}

inline void to_json(Json& j, const BinarizationScheme& s) {
  j = {{"N", s.N}, {"kappa", s.kappa}, {"C", s.C}};
}

inline void from_json(const Json& j, BinarizationScheme& s) {
  s.N = j.at("N").get<int>();
  s.kappa = j.at("kappa").get<double>();
  s.C = j.at("C").get<double>();
  s.validate();
}

inline void to_json(Json& j, const BinaryVar& v) {
  if (v.is_auxiliary())
    j = {{"kind", "aux"}, {"a", v.a}, {"b", v.b}};
  else
    j = {{"kind", "bit"}, {"source", v.source}, {"bit", v.bit}};
}

inline void from_json(const Json& j, BinaryVar& v) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "aux")
    v = BinaryVar::auxiliary(j.at("a").get<VarIndex>(), j.at("b").get<VarIndex>());
  else if (kind == "bit")
    v = BinaryVar::source_bit(j.at("source").get<std::size_t>(), j.at("bit").get<int>());
  else
    throw FormatError("registry: unknown kind '" + kind + "'");
}

inline void to_json(Json& j, const QuboModel& q) {
  Json quad = Json::array();
  for (const auto& [key, v] : q.quadratic)
    quad.push_back({{"i", key.first}, {"j", key.second}, {"v", v}});
  j = {{"kind", "qubo"},       {"num_vars", q.num_vars}, {"offset", q.offset},
       {"linear", q.linear},   {"quadratic", quad},      {"registry", q.registry},
       {"aux_penalty", q.aux_penalty}};
}

inline void from_json(const Json& j, QuboModel& q) {
  q = QuboModel(j.at("num_vars").get<std::size_t>());
  q.offset = j.value("offset", 0.0);
  const auto linear = j.at("linear").get<std::vector<double>>();
  if (linear.size() != q.num_vars) throw FormatError("qubo: linear length mismatch");
  q.linear = linear;
  for (const auto& e : j.at("quadratic")) {
    const auto a = e.at("i").get<VarIndex>();
    const auto b = e.at("j").get<VarIndex>();
    if (a >= q.num_vars || b >= q.num_vars || a == b)
      throw FormatError("qubo: bad quadratic index");
    q.add_quadratic(a, b, e.at("v").get<double>());
  }
  if (j.contains("registry")) q.registry = j.at("registry").get<std::vector<BinaryVar>>();
  if (j.contains("aux_penalty"))
    q.aux_penalty = j.at("aux_penalty").get<std::vector<double>>();
}

// ---- Runs and fits ------------------------------------------------------------

inline void to_json(Json& j, const SolverRun& r) {
  j = {{"mode", to_string(r.mode)},
       {"best_x", r.best_x},
       {"best_energy", r.best_energy},
       {"trace", r.trace},
       {"trace_stride", r.trace_stride},
       {"iterations", r.iterations},
       {"elapsed_seconds", r.elapsed},
       {"seed", r.seed},
       {"schedule", r.schedule},
       {"best_restart", r.best_restart}};
  if (r.mode == SolverMode::Continuous) {
    j["R"] = r.R;
    j["grid_levels"] = r.grid_levels;
  }
  if (r.mode == SolverMode::Discrete) j["levels"] = r.levels;
}

inline void from_json(const Json& j, SolverRun& r) {
  r = SolverRun{};
  r.mode = parse_solver_mode(j.at("mode").get<std::string>());
  r.best_x = j.at("best_x").get<std::vector<double>>();
  r.best_energy = j.at("best_energy").get<double>();
  r.trace = j.value("trace", std::vector<double>{});
  r.trace_stride = j.value("trace_stride", std::size_t{1});
  r.iterations = j.value("iterations", std::size_t{0});
  r.elapsed = j.value("elapsed_seconds", 0.0);
  r.seed = j.value("seed", std::uint64_t{0});
  r.schedule = j.value("schedule", 0);
  r.best_restart = j.value("best_restart", std::size_t{0});
  r.R = j.value("R", 0.0);
  r.grid_levels = j.value("grid_levels", kGridLevels);
  r.levels = j.value("levels", std::vector<std::size_t>{});
}

inline void to_json(Json& j, const FitResult& f) {
  j = {{"W", f.factors.W},
       {"H", f.factors.H},
       {"objective_history", f.objective_history},
       {"iterations", f.iterations},
       {"converged", f.converged}};
}

// ---- Files --------------------------------------------------------------------

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline Matrix read_matrix_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_matrix_csv(in);
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_IO_HPP
