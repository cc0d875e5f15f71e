#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "dissipasynth/io.hpp"
#include "dissipasynth/synthesis.hpp"

namespace dissipasynth {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitInfeasible = 2;

struct InputSpec {
  enum class Policy { prbs, sine, values } policy = Policy::prbs;
  double amplitude = 1.0;
  double frequency = 0.7;  // rad/sample, sine only
  Matrix values;           // m x N, values and file policies
};

struct SupplySpec {
  enum class Mode { hinf_gamma, hinf_minimize, general } mode = Mode::hinf_minimize;
  double gamma = 0.0;
  Matrix Q, S, R;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  Plant plant;

  int N = 0;
  Vector x0;
  InputSpec input;
  double energy_eps = 0.0;
  double noise_fill = 0.9;  // recorded noise energy as a fraction of the bound
  std::optional<std::uint64_t> noise_seed;

  SupplySpec supply;
  AlphaStrategy alpha;
  SynthesisOptions options;
  Matrix U;  // empty: identity

  int samples = 50;
  int grid_size = 512;
  std::optional<std::uint64_t> verify_seed;

  std::filesystem::path output_dir = "out";

  std::uint64_t input_seed() const { return derive_seed(seed, 0); }
  std::uint64_t effective_noise_seed() const { return noise_seed.value_or(derive_seed(seed, 1)); }
  std::uint64_t effective_verify_seed() const { return verify_seed.value_or(derive_seed(seed, 2)); }
};

struct CliOverrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<AlphaStrategy> alpha_grid;
  std::optional<double> solver_tol;
};

/// Parses "lo:hi:steps" into a log-spaced grid strategy.
AlphaStrategy parse_alpha_grid(const std::string& text);

/// Relative file references resolve against the config's directory.
ExperimentConfig load_config(const std::filesystem::path& path, const CliOverrides& overrides = {});
ExperimentConfig parse_config(const Json& j, const std::filesystem::path& base_dir,
                              const CliOverrides& overrides = {});

/// Input and disturbance sequences of the configured recording experiment.
DataRecord generate_record(const ExperimentConfig& cfg);

/// Known plant matrices plus the consistency set of `rec`; `supply` is the
/// configured one (gamma = 1 placeholder in minimize mode).
SynthesisIngredients ingredients(const ExperimentConfig& cfg, const DataRecord& rec);

enum class Stage { run, record, synth, verify, sweep };

std::optional<Stage> parse_stage(const std::string& name);

/// Executes one stage and returns the process exit code. Diagnostics are
/// single-line JSON objects written to `events`.
int run_stage(Stage stage, const std::filesystem::path& config_path, const CliOverrides& overrides,
              std::ostream& events);

}  // namespace dissipasynth
