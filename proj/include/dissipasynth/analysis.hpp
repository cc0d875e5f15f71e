#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dissipasynth/lmi.hpp"
#include "dissipasynth/model.hpp"
#include "dissipasynth/synthesis.hpp"

namespace dissipasynth {

/// Storage function V(x) = x^T P x.
struct Certificate {
  Matrix P;
  double slack = 0.0;  // min(lambda_min(P), -lambda_max(dissipation LMI))
};

/// [[A^T P A - P + C^T R C, A^T P B + C^T S^T + C^T R D],
///  [*, B^T P B + Q + S D + D^T S^T + D^T R D]]; strict dissipativity is this ≺ 0
/// together with P ≻ 0.
Matrix dissipation_lmi(const StateSpace& sys, const Matrix& P, const Matrix& Q, const Matrix& S,
                       const Matrix& R);

/// Maximizes t subject to P ⪰ t I and -LMI(P) ⪰ t I with t ≤ 1. Returns the
/// certificate when the re-checked slack exceeds accept_slack.
std::optional<Certificate> certify_dissipativity(const StateSpace& sys, const Matrix& Q,
                                                 const Matrix& S, const Matrix& R,
                                                 const SdpOptions& options = {},
                                                 const SdpBackend& backend = default_backend(),
                                                 double accept_slack = kAcceptSlack);

std::optional<Certificate> certify_dissipativity(const StateSpace& sys, const SupplyRate& supply,
                                                 const SdpOptions& options = {},
                                                 const SdpBackend& backend = default_backend());

struct SampleVerdict {
  Matrix A, B;
  bool stable = false;
  bool certified = false;
  double slack = 0.0;
  double peak_gain = 0.0;  // +inf when the closed loop is not Schur stable
  FrequencyCurve curve;
};

struct WorstCaseReport {
  bool all_certified = true;
  double min_slack = 0.0;
  double worst_peak_gain = 0.0;
  int samples = 0;
  bool vacuous = false;     // samples == 0
  bool degenerate = false;  // ntilde == 0: only the nominal system was checked
  std::vector<SampleVerdict> verdicts;
};

/// Closes the loop on sample_members(ing.cs, samples, seed), certifies each
/// closed loop against ing.supply and records its frequency peak.
WorstCaseReport worst_case_check(const SynthesisIngredients& ing, const Controller& ctrl,
                                 int samples, std::uint64_t seed, Exec exec = Exec::parallel,
                                 int grid_size = kDefaultFrequencyGrid,
                                 const SdpOptions& options = {});

/// Simulates `trials` random trajectories of length `horizon` (x0 and w_k
/// uniform in [-1, 1]) and checks V(x_{k+1}) - V(x_k) < s(w_k, z_k) at every
/// step up to 1e-9 relative slack, where
///   s(w, z) = -(w^T Q w + 2 w^T S z + z^T R z)
/// matches the sign convention of dissipation_lmi. Steps with x_k = 0 and
/// w_k = 0 are skipped.
bool storage_trajectory_check(const StateSpace& sys, const Certificate& cert, const Matrix& Q,
                              const Matrix& S, const Matrix& R, int horizon, int trials,
                              std::uint64_t seed);

struct SLemmaResult {
  bool reduction_holds = false;  // M - alpha K ≻ 0
  int checked = 0;
  std::optional<Matrix> counterexample;  // N x n
};

/// For M, K of size (n + N), checks [I Z^T] M [I Z^T]^T ≻ 0 on `samples`
/// members Z of S_K (ray bisection from -K22^{-1} K12^T) whenever
/// M - alpha K ≻ 0. Throws PreconditionError for alpha < 0 or when the
/// hypotheses on K fail.
SLemmaResult s_lemma_check(const Matrix& M, const Matrix& K, Eigen::Index n, double alpha,
                           int samples, std::uint64_t seed, Exec exec = Exec::parallel);

}  // namespace dissipasynth
