#include "dissipasynth/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dissipasynth {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& what, Eigen::Index rows,
                        Eigen::Index cols) {
  auto number = [&](const Json& v) {
    if (!v.is_number()) throw FormatError(what + ": matrix entries must be numbers");
    return v.get<double>();
  };
  if (j.is_number()) return Matrix::Constant(1, 1, number(j));
  if (!j.is_array()) throw FormatError(what + ": expected a matrix (array of rows)");
  if (j.empty()) return Matrix(rows < 0 ? 0 : rows, cols < 0 ? 0 : cols);
  if (!j.front().is_array()) {
    Matrix m(1, static_cast<Eigen::Index>(j.size()));
    for (std::size_t c = 0; c < j.size(); ++c) m(0, static_cast<Eigen::Index>(c)) = number(j[c]);
    return m;
  }
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = static_cast<Eigen::Index>(j.front().size());
  Matrix m(r, c == 0 && cols > 0 ? cols : c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      throw FormatError(what + ": rows have different lengths");
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)]);
  }
  return m;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const DataRecord& rec, Eigen::Index p) {
  Json j;
  j["n"] = rec.n();
  j["m"] = rec.m();
  j["p"] = p;
  j["N"] = rec.horizon();
  j["Xplus"] = matrix_to_json(rec.Xplus);
  j["Xminus"] = matrix_to_json(rec.Xminus);
  j["Uminus"] = matrix_to_json(rec.Uminus);
  return j;
}

namespace {

const Json& field(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key))
    throw FormatError(what + ": missing field \"" + key + "\"");
  return j.at(key);
}

Eigen::Index index_field(const Json& j, const char* key, const std::string& what) {
  const Json& v = field(j, key, what);
  if (!v.is_number_integer()) throw FormatError(what + ": \"" + key + "\" must be an integer");
  return v.get<Eigen::Index>();
}

}  // namespace

DataRecord record_from_json(const Json& j) {
  const std::string what = "record.json";
  const auto n = index_field(j, "n", what);
  const auto m = index_field(j, "m", what);
  const auto N = index_field(j, "N", what);
  DataRecord rec;
  rec.Xplus = matrix_from_json(field(j, "Xplus", what), "Xplus", n, N);
  rec.Xminus = matrix_from_json(field(j, "Xminus", what), "Xminus", n, N);
  rec.Uminus = matrix_from_json(field(j, "Uminus", what), "Uminus", m, N);
  require_shape(rec.Xplus, n, N, "Xplus");
  require_shape(rec.Xminus, n, N, "Xminus");
  require_shape(rec.Uminus, m, N, "Uminus");
  return rec;
}

Json to_json(const ConsistencySet& cs, const AssumptionReport& rep) {
  Json j;
  j["n"] = cs.n;
  j["m"] = cs.m;
  j["ntilde"] = cs.ntilde();
  j["phi_tilde"] = matrix_to_json(cs.phi_tilde);
  j["PhiT11"] = matrix_to_json(cs.phi11());
  j["PhiT12"] = matrix_to_json(cs.phi12());
  j["PhiT13"] = matrix_to_json(cs.phi13());
  j["PhiT22"] = matrix_to_json(cs.phi22());
  j["PhiT23"] = matrix_to_json(cs.phi23());
  j["PhiT33"] = matrix_to_json(cs.phi33());
  j["As"] = matrix_to_json(cs.As);
  j["Bs"] = matrix_to_json(cs.Bs);
  j["Xi"] = matrix_to_json(cs.Xi);
  j["Lambda"] = matrix_to_json(cs.Lambda.transpose());
  j["assumptions"] = {{"rank_ok", rep.rank_ok},
                      {"rank", rep.rank},
                      {"k22_negdef", rep.k22_negdef},
                      {"sigma_nonempty", rep.sigma_nonempty}};
  return j;
}

Json to_json(const DecisionVars& v) {
  return {{"X", matrix_to_json(v.X)},     {"Y", matrix_to_json(v.Y)},
          {"Atc", matrix_to_json(v.Atc)}, {"Btc", matrix_to_json(v.Btc)},
          {"Ctc", matrix_to_json(v.Ctc)}, {"Dc", matrix_to_json(v.Dc)},
          {"alpha", v.alpha}};
}

DecisionVars decision_vars_from_json(const Json& j) {
  const std::string what = "vars";
  DecisionVars v;
  v.X = matrix_from_json(field(j, "X", what), "X");
  v.Y = matrix_from_json(field(j, "Y", what), "Y");
  v.Atc = matrix_from_json(field(j, "Atc", what), "Atc");
  v.Btc = matrix_from_json(field(j, "Btc", what), "Btc");
  v.Ctc = matrix_from_json(field(j, "Ctc", what), "Ctc");
  v.Dc = matrix_from_json(field(j, "Dc", what), "Dc");
  const Json& a = field(j, "alpha", what);
  if (!a.is_number()) throw FormatError("vars: alpha must be a number");
  v.alpha = a.get<double>();
  return v;
}

Json to_json(const Controller& k) {
  return {{"Ac", matrix_to_json(k.Ac)},
          {"Bc", matrix_to_json(k.Bc)},
          {"Cc", matrix_to_json(k.Cc)},
          {"Dc", matrix_to_json(k.Dc)}};
}

Controller controller_from_json(const Json& j) {
  const std::string what = "controller";
  Controller k;
  k.Ac = matrix_from_json(field(j, "Ac", what), "Ac");
  k.Bc = matrix_from_json(field(j, "Bc", what), "Bc");
  k.Cc = matrix_from_json(field(j, "Cc", what), "Cc");
  k.Dc = matrix_from_json(field(j, "Dc", what), "Dc");
  return k;
}

Json to_json(const WorstCaseReport& rep) {
  Json j;
  j["all_certified"] = rep.all_certified;
  j["min_slack"] = number_or_null(rep.vacuous ? 0.0 : rep.min_slack);
  j["worst_peak_gain"] = number_or_null(rep.worst_peak_gain);
  j["samples"] = rep.samples;
  j["vacuous"] = rep.vacuous;
  j["degenerate"] = rep.degenerate;
  Json per = Json::array();
  for (std::size_t i = 0; i < rep.verdicts.size(); ++i) {
    const auto& v = rep.verdicts[i];
    per.push_back({{"index", i},
                   {"stable", v.stable},
                   {"certified", v.certified},
                   {"slack", number_or_null(v.slack)},
                   {"peak_gain", number_or_null(v.peak_gain)},
                   {"peak_theta", v.stable ? Json(v.curve.peak.theta) : Json(nullptr)}});
  }
  j["per_sample"] = std::move(per);
  return j;
}

Json to_json(const SdpProblem& problem) {
  Json j;
  Json vars = Json::array();
  for (const auto& v : problem.variables()) {
    const char* kind = v.kind == VarKind::scalar      ? "scalar"
                       : v.kind == VarKind::symmetric ? "symmetric"
                                                      : "full";
    vars.push_back({{"id", v.id}, {"kind", kind}, {"rows", v.rows}, {"cols", v.cols},
                    {"offset", v.offset}});
  }
  j["variables"] = std::move(vars);
  j["slots"] = problem.num_slots();
  if (problem.objective()) {
    Json c = Json::array();
    for (Eigen::Index i = 0; i < problem.objective()->size(); ++i) c.push_back((*problem.objective())(i));
    j["objective"] = std::move(c);
  } else {
    j["objective"] = nullptr;
  }
  Json lmis = Json::array();
  for (const auto& lmi : problem.constraints()) {
    Json coeffs = Json::array();
    for (const auto& [s, c] : lmi.coeffs) coeffs.push_back({{"slot", s}, {"matrix", matrix_to_json(c)}});
    lmis.push_back({{"name", lmi.name},
                    {"d", lmi.dim()},
                    {"constant", matrix_to_json(lmi.constant)},
                    {"coeffs", std::move(coeffs)}});
  }
  j["constraints"] = std::move(lmis);
  return j;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string alpha_trace_csv(const std::vector<TracePoint>& trace) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& t : trace) rows.push_back({format_double(t.alpha), format_double(t.value), to_string(t.status)});
  return csv_text({"alpha", "gamma_or_slack", "status"}, rows);
}

std::string gain_curve_csv(const FrequencyCurve& curve) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < curve.grid.size(); ++i)
    rows.push_back({format_double(curve.grid[i]), format_double(curve.gain[i])});
  return csv_text({"theta", "gain"}, rows);
}

}  // namespace dissipasynth
