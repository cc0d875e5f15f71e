#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipasynth/data.hpp"
#include "dissipasynth/lmi.hpp"
#include "dissipasynth/model.hpp"

namespace dissipasynth {

/// Quadratic supply s(w, z) = -[w; z]^T [[Q, S], [S^T, R]] [w; z] with
/// R = T diag(Rtilde) T^T. H-infinity level gamma: Q = -gamma^2 I, S = 0, R = I.
struct SupplyRate {
  Matrix Q;  // p x p
  Matrix S;  // p x q
  Matrix R;  // q x q, R ⪰ 0
  Matrix T;  // q x qtilde
  Vector Rtilde;

  Eigen::Index p() const { return Q.rows(); }
  Eigen::Index q() const { return R.rows(); }
  Eigen::Index qtilde() const { return Rtilde.size(); }
};

/// Throws PreconditionError "Problem 1 requires R ⪰ 0" for indefinite R.
SupplyRate supply_factor(const Matrix& Q, const Matrix& S, const Matrix& R,
                         double tol = kDefiniteTol);

/// Q = -gamma^2 I_p, S = 0, R = I_q.
SupplyRate hinf_supply(double gamma, Eigen::Index p, Eigen::Index q);

struct SynthesisIngredients {
  ConsistencySet cs;  // complete: nominal and residual factor
  SupplyRate supply;
  Matrix B1, C1, D1, E, C, F;

  Eigen::Index n() const { return cs.n; }
  Eigen::Index m() const { return cs.m; }
  Eigen::Index p() const { return B1.cols(); }
  Eigen::Index q() const { return C1.rows(); }
  Eigen::Index l() const { return C.rows(); }

  void validate() const;
  /// Takes the known matrices of `plant`; A and B are ignored.
  static SynthesisIngredients from_plant(ConsistencySet cs, SupplyRate supply, const Plant& plant);
  /// Plant with the given (A, B) and the known matrices.
  Plant plant(const Matrix& A, const Matrix& B) const;
};

struct DecisionVars {
  Matrix X, Y;          // symmetric n x n
  Matrix Atc;           // n x n
  Matrix Btc;           // n x l
  Matrix Ctc;           // m x n
  Matrix Dc;            // m x l
  double alpha = 0.0;
};

enum class Objective { feasibility, minimize_gamma_sq };

/// Row/column bookkeeping of the (CS) matrix. Block order:
///   0 X, 1 Y, 2 w (p), 3 z (qtilde) | 4 Y, 5 X, 6 A (n), 7 B (m), 8 Xi (ntilde).
struct PiLayout {
  static constexpr int kBlocks = 9;
  std::array<Eigen::Index, kBlocks> size{};
  std::array<Eigen::Index, kBlocks> offset{};
  Eigen::Index dim = 0;

  static PiLayout make(Eigen::Index n, Eigen::Index p, Eigen::Index qtilde, Eigen::Index m,
                       Eigen::Index ntilde);
  static const char* block_name(int b);
};

/// One LMI "Pi" over variables X, Y, Atc, Btc, Ctc, Dc and either
///   t (feasibility: Pi - t I ⪰ 0, maximize t) or
///   g (minimize_gamma_sq: Q := -g I, Pi ⪰ margin I, minimize g).
/// The Lambda^{-1} and Rtilde^{-1} diagonal blocks are normalized to identity
/// by a diagonal congruence, which leaves Pi ≻ 0 unchanged.
/// var_bound > 0 adds |x_i| <= var_bound for every controller-variable slot
/// as a second, diagonal LMI.
SdpProblem assemble_pi(const SynthesisIngredients& ing, double alpha,
                       Objective objective = Objective::feasibility, double var_bound = 0.0);

/// Evaluates Pi (normalized as in assemble_pi, without t or margin) at the
/// given decision variables; g replaces Q when set.
Matrix evaluate_pi(const SynthesisIngredients& ing, const DecisionVars& v,
                   std::optional<double> g = std::nullopt);

inline constexpr double kAcceptSlack = 1e-8;
inline constexpr double kGammaBackoff = 1e-3;
inline constexpr double kVarBound = 0.0;  // disabled
inline constexpr double kStorageBound = 1e4;

struct SynthesisOptions {
  SdpOptions sdp;
  double accept_slack = kAcceptSlack;
  double gamma_backoff = kGammaBackoff;  // relative increase of g* before the slack solve
  double var_bound = kVarBound;          // entrywise bound on the decision variables (0: none)
  double storage_bound = kStorageBound;  // X ⪯ b I and Y ⪯ b I (0: none)
};

enum class AlphaStatus { feasible, infeasible, inaccurate };
const char* to_string(AlphaStatus s);

struct FixedAlphaResult {
  AlphaStatus status = AlphaStatus::infeasible;
  std::optional<DecisionVars> vars;
  std::optional<double> gamma;
  double slack = 0.0;  // lambda_min(Pi) at the returned point
  std::string message;
};

/// Throws PreconditionError for alpha <= 0.
FixedAlphaResult solve_fixed_alpha(const SynthesisIngredients& ing, double alpha,
                                   Objective objective = Objective::feasibility,
                                   const SynthesisOptions& options = {},
                                   const SdpBackend& backend = default_backend());

struct AlphaStrategy {
  enum class Kind { grid, golden, grid_then_golden } kind = Kind::grid_then_golden;
  double lo = 1e-2;
  double hi = 1e4;
  int steps = 32;  // grid points
  int iters = 16;  // golden-section iterations

  static AlphaStrategy grid(double lo, double hi, int steps);
  static AlphaStrategy golden(double lo, double hi, int iters);
};

struct TracePoint {
  double alpha = 0.0;
  double value = 0.0;  // gamma or slack; NaN when not feasible
  AlphaStatus status = AlphaStatus::infeasible;
};

struct SynthesisResult {
  DecisionVars vars;
  Controller controller;
  Matrix U;
  std::optional<double> gamma;
  double slack = 0.0;
  std::vector<TracePoint> trace;  // sorted by alpha
};

class SynthesisInfeasible : public std::runtime_error {
 public:
  explicit SynthesisInfeasible(std::vector<TracePoint> trace);
  const std::vector<TracePoint>& trace() const { return trace_; }

 private:
  std::vector<TracePoint> trace_;
};

/// Evaluates the strategy, keeps the best feasible alpha (smallest gamma or
/// largest slack), re-solves there for the point with the smallest
/// trace(X) + trace(Y) that keeps half of the slack, and reconstructs the
/// controller with U (identity if empty). Throws SynthesisInfeasible carrying the trace when nothing is feasible.
SynthesisResult search_alpha(const SynthesisIngredients& ing, const AlphaStrategy& strategy,
                             Objective objective = Objective::feasibility,
                             const SynthesisOptions& options = {}, Exec exec = Exec::parallel,
                             const Matrix& U = {});

/// search_alpha with Objective::minimize_gamma_sq.
SynthesisResult min_gamma(const SynthesisIngredients& ing, const AlphaStrategy& strategy = {},
                          const SynthesisOptions& options = {}, Exec exec = Exec::parallel,
                          const Matrix& U = {});

inline constexpr double kReconstructCondLimit = 1e10;

/// Controller from the decision variables:
///   V^T = U^{-1}(I - XY), Bc = U^{-1}(Btc - X Bs Dc), Cc = (Ctc - Dc C Y) V^{-T},
///   Ac = U^{-1}(Atc - X(As Y + Bs Ctc) - U Bc C Y) V^{-T}.
/// Throws NumericalError when I - XY or U is near singular.
Controller reconstruct(const DecisionVars& v, const ConsistencySet& cs, const Matrix& C,
                       const Matrix& U = {}, double cond_limit = kReconstructCondLimit);

}  // namespace dissipasynth
