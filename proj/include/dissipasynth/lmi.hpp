#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dissipasynth/types.hpp"

namespace dissipasynth {

// ---------------------------------------------------------------------------
// Definiteness and factorization utilities
// ---------------------------------------------------------------------------

enum class Definiteness { posdef, psd, indef, negdef, nsd };

const char* to_string(Definiteness d);

/// Classifies a symmetric matrix with the scale-relative threshold
/// tol * (1 + ||M||_2). The zero matrix is reported as psd.
Definiteness definiteness(const Matrix& M, double tol = kDefiniteTol);

bool is_posdef(const Matrix& M, double tol = kDefiniteTol);
bool is_psd(const Matrix& M, double tol = kDefiniteTol);
bool is_negdef(const Matrix& M, double tol = kDefiniteTol);

double min_eigenvalue(const Matrix& M);
double max_eigenvalue(const Matrix& M);

/// M = U * diag(D) * U^T with U having orthonormal columns and D > 0.
struct PsdFactor {
  Matrix U;
  Vector D;  // descending
  Eigen::Index rank() const { return D.size(); }
  Matrix product() const { return U * D.asDiagonal() * U.transpose(); }
};

/// Keeps eigenvalues above tol * (1 + ||M||_2). Throws NumericalError listing
/// the offending eigenvalues when M has one below -tol * (1 + ||M||_2).
PsdFactor psd_factor(const Matrix& M, double tol = kDefiniteTol);

// ---------------------------------------------------------------------------
// Affine LMI carrier
// ---------------------------------------------------------------------------

enum class VarKind { scalar, symmetric, full };

struct VariableSpec {
  std::string id;
  VarKind kind = VarKind::scalar;
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  Eigen::Index offset = 0;  // first scalar slot
  Eigen::Index slots() const;
};

/// constant + sum_s x_s * coeff_s  ⪰ 0, where s ranges over scalar slots of
/// the owning problem. Symmetric matrix variables contribute one slot per
/// upper-triangle entry, full matrices one slot per entry.
struct AffineLmi {
  std::string name;
  Matrix constant;
  std::vector<std::pair<Eigen::Index, Matrix>> coeffs;

  Eigen::Index dim() const { return constant.rows(); }
  Matrix evaluate(const Vector& x) const;
};

/// Builds an AffineLmi from an affine matrix-valued map. `eval(x, w)` must
/// return constant * w + linear(x); it is probed at (0, 1) and (e_s, 0).
AffineLmi linearize(std::string name, Eigen::Index slots,
                    const std::function<Matrix(const Vector&, double)>& eval);

class SdpProblem {
 public:
  /// Declares a variable and returns its first scalar slot.
  Eigen::Index add_variable(const std::string& id, VarKind kind = VarKind::scalar, Eigen::Index rows = 1,
                            Eigen::Index cols = 1);
  void add_constraint(AffineLmi lmi);
  /// Linear objective to minimize, indexed by scalar slot.
  void set_objective(Vector c);
  void minimize(const std::string& id, double weight = 1.0);

  Eigen::Index num_slots() const { return slots_; }
  const std::vector<VariableSpec>& variables() const { return vars_; }
  const std::vector<AffineLmi>& constraints() const { return lmis_; }
  const std::optional<Vector>& objective() const { return objective_; }
  const VariableSpec& variable(const std::string& id) const;
  bool has_variable(const std::string& id) const;

  /// Slot of entry (i, j) of a variable; symmetric variables map (j, i) too.
  Eigen::Index slot(const std::string& id, Eigen::Index i = 0, Eigen::Index j = 0) const;
  /// Places the value of variable `id` at `x` into a dense matrix.
  Matrix unpack(const std::string& id, const Vector& x) const;
  /// Writes a dense matrix into the slots of variable `id`.
  void pack(const std::string& id, const Matrix& value, Vector& x) const;

  /// Checks symmetry, uniform block sizes, slot ranges and duplicate slots.
  void validate() const;

 private:
  std::vector<VariableSpec> vars_;
  std::vector<AffineLmi> lmis_;
  std::optional<Vector> objective_;
  Eigen::Index slots_ = 0;
};

// ---------------------------------------------------------------------------
// Solver contract
// ---------------------------------------------------------------------------

enum class SdpStatus { optimal, infeasible, inaccurate, error };

const char* to_string(SdpStatus s);

struct SdpOptions {
  double feas_tol = 1e-8;  // eigenvalue margin relative to each LMI's largest entry
  double gap_tol = 1e-7;   // relative duality gap
  int max_iter = 100;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::error;
  Vector x;
  std::map<std::string, Matrix> values;
  double objective = 0.0;
  double min_slack = 0.0;  // worst lambda_min over the constraints at x
  int iterations = 0;
  std::string message;

  const Matrix& value(const std::string& id) const { return values.at(id); }
};

class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual std::string name() const = 0;
  /// Returns status and x; solve_sdp fills values and re-checks feasibility.
  virtual SdpSolution solve(const SdpProblem& problem, const SdpOptions& options) const = 0;
};

/// The in-tree primal-dual interior-point backend.
const SdpBackend& default_backend();

/// Validates the problem, runs the backend and re-checks every constraint at
/// the returned point. An "optimal" answer whose relative_worst_slack is below
/// -feas_tol is downgraded to "inaccurate".
SdpSolution solve_sdp(const SdpProblem& problem, const SdpOptions& options = {},
                      const SdpBackend& backend = default_backend());

double worst_slack(const SdpProblem& problem, const Vector& x);
/// worst_slack with each LMI divided by max(1, its largest |entry|).
double relative_worst_slack(const SdpProblem& problem, const Vector& x);

}  // namespace dissipasynth
