#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dissipasynth/analysis.hpp"
#include "dissipasynth/data.hpp"
#include "dissipasynth/lmi.hpp"
#include "dissipasynth/synthesis.hpp"

namespace dissipasynth {

using Json = nlohmann::json;

/// Malformed or missing input file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the same double; "nan",
/// "inf" and "-inf" for non-finite values.
std::string format_double(double v);

/// Row-major nested arrays; a 0-column matrix becomes rows of empty arrays.
Json matrix_to_json(const Matrix& m);
/// Accepts nested arrays, a flat array (one row) or a bare number (1x1).
/// `rows`/`cols` are needed only to size empty matrices.
Matrix matrix_from_json(const Json& j, const std::string& what, Eigen::Index rows = -1,
                        Eigen::Index cols = -1);
/// Finite numbers as numbers, everything else as null.
Json number_or_null(double v);

Json to_json(const DataRecord& rec, Eigen::Index p);
DataRecord record_from_json(const Json& j);

Json to_json(const ConsistencySet& cs, const AssumptionReport& rep);
Json to_json(const DecisionVars& v);
DecisionVars decision_vars_from_json(const Json& j);
Json to_json(const Controller& k);
Controller controller_from_json(const Json& j);
Json to_json(const WorstCaseReport& rep);

/// {"d": dim, "constant": ..., "coeffs": [{"slot": s, "matrix": ...}]} per LMI,
/// plus the variable table and objective.
Json to_json(const SdpProblem& problem);

Json read_json_file(const std::filesystem::path& path);
/// Writes `text` to `path` through a temporary file in the same directory.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Header line plus one line per row, values via format_double.
std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

std::string alpha_trace_csv(const std::vector<TracePoint>& trace);
std::string gain_curve_csv(const FrequencyCurve& curve);

}  // namespace dissipasynth
