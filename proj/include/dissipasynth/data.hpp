#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dissipasynth/model.hpp"

namespace dissipasynth {

/// One recorded input-state trajectory: columns of Xminus are x_0..x_{N-1},
/// of Xplus x_1..x_N, of Uminus u_0..u_{N-1}.
struct DataRecord {
  Matrix Xplus;
  Matrix Xminus;
  Matrix Uminus;
  std::optional<Matrix> Wminus_true;  // test harnesses only

  Eigen::Index n() const { return Xminus.rows(); }
  Eigen::Index m() const { return Uminus.rows(); }
  Eigen::Index horizon() const { return Xminus.cols(); }

  void validate() const;
};

/// Quadratic bound on the recorded disturbance sequence:
///   [I; W^T]^T [[Phi11, Phi12], [Phi12^T, Phi22]] [I; W^T] ⪰ 0.
struct DisturbanceBound {
  Matrix Phi11;  // p x p
  Matrix Phi12;  // p x N
  Matrix Phi22;  // N x N, negative definite

  Eigen::Index p() const { return Phi11.rows(); }
  Eigen::Index horizon() const { return Phi22.rows(); }

  /// Throws PreconditionError when Phi22 is not negative definite or the
  /// disturbance set is empty.
  void validate() const;
  /// Smallest eigenvalue of the quadratic form at W (>= 0 means admissible).
  double margin(const Matrix& W) const;
};

/// Data-consistent plant set
///   Sigma = {(A, B) : [I A B] PhiT [I A B]^T ⪰ 0}
/// with PhiT partitioned in blocks of sizes (n, n, m), together with the
/// nominal member (As, Bs) and the factorization Xi diag(Lambda) Xi^T of the
/// residual [I As Bs] PhiT [I As Bs]^T.
struct ConsistencySet {
  Matrix phi_tilde;  // (2n + m) x (2n + m), exactly symmetric
  Eigen::Index n = 0;
  Eigen::Index m = 0;

  Matrix As, Bs;
  Matrix Xi;       // n x ntilde, orthonormal columns
  Vector Lambda;   // ntilde positive entries
  bool has_nominal = false;
  bool has_factor = false;

  Eigen::Index ntilde() const { return Lambda.size(); }

  auto phi11() const { return phi_tilde.block(0, 0, n, n); }
  auto phi12() const { return phi_tilde.block(0, n, n, n); }
  auto phi13() const { return phi_tilde.block(0, 2 * n, n, m); }
  auto phi22() const { return phi_tilde.block(n, n, n, n); }
  auto phi23() const { return phi_tilde.block(n, 2 * n, n, m); }
  auto phi33() const { return phi_tilde.block(2 * n, 2 * n, m, m); }
  /// [[Phi22, Phi23], [Phi23^T, Phi33]]
  auto k22() const { return phi_tilde.block(n, n, n + m, n + m); }
  /// [Phi12, Phi13]
  auto k12() const { return phi_tilde.block(0, n, n, n + m); }

  /// [I A B] PhiT [I A B]^T
  Matrix quadratic_form(const Matrix& A, const Matrix& B) const;
};

/// Simulates x_{k+1} = A x_k + B u_k + B1 w_k and stores the data matrices
/// together with the true disturbance sequence.
DataRecord record(const Plant& plant, const std::vector<Vector>& u_seq,
                  const std::vector<Vector>& w_seq, const Vector& x0);

/// Energy bound sum_k w_k w_k^T ⪯ eps^2 N I:
/// Phi11 = eps^2 N I_p, Phi12 = 0, Phi22 = -I_N.
DisturbanceBound energy_phi(double eps, Eigen::Index N, Eigen::Index p);

/// PhiT = M^T Phi M with M = [[I, 0, 0], [Xplus^T, -Xminus^T, -Uminus^T]]
/// and Phi = [[B1 Phi11 B1^T, B1 Phi12], [Phi12^T B1^T, Phi22]].
ConsistencySet build_phi_tilde(const DataRecord& rec, const DisturbanceBound& bound,
                               const Matrix& B1);

struct AssumptionReport {
  bool rank_ok = false;         // rank [Xminus; Uminus] == n + m
  bool sigma_nonempty = false;  // Schur complement of the K22 block ⪰ 0
  bool k22_negdef = false;
  Eigen::Index rank = 0;

  bool all() const { return rank_ok && sigma_nonempty && k22_negdef; }
};

/// Rank threshold: singular values above 1e-8 * sigma_max.
AssumptionReport check_assumptions(const DataRecord& rec, const ConsistencySet& cs);

struct Membership {
  bool inside = false;
  double margin = 0.0;  // lambda_min of the quadratic form
};

Membership membership(const Matrix& A, const Matrix& B, const ConsistencySet& cs,
                      double tol = kDefiniteTol);

/// Analytic center [As Bs]^T = -K22^{-1} [Phi12^T; Phi13^T]. Stores the
/// result in `cs` and returns it. Throws PreconditionError when K22 is not
/// negative definite.
std::pair<Matrix, Matrix> nominal_system(ConsistencySet& cs);

inline constexpr double kResidualFactorTol = 1e-13;

/// Factorizes [I As Bs] PhiT [I As Bs]^T = Xi diag(Lambda) Xi^T keeping
/// eigenvalues above tol * (1 + ||PhiT||_2 (1 + ||[As Bs]||_F^2)), the size
/// of the terms that cancel in the residual. Requires nominal_system.
void residual_factor(ConsistencySet& cs, double tol = kResidualFactorTol);

struct MemberSamples {
  std::vector<std::pair<Matrix, Matrix>> members;
  bool degenerate = false;  // ntilde == 0: only (As, Bs) is available
};

/// Draws `count` members of Sigma: (As, Bs) first, then alternately boundary
/// points (bisection along a random direction, 40 steps, inner end kept) and
/// interior points on the same ray. Sample i depends only on (seed, i).
MemberSamples sample_members(const ConsistencySet& cs, int count, std::uint64_t seed,
                             Exec exec = Exec::parallel);

/// Convenience: build_phi_tilde + nominal_system + residual_factor.
ConsistencySet make_consistency_set(const DataRecord& rec, const DisturbanceBound& bound,
                                    const Matrix& B1, double tol = kResidualFactorTol);

/// Deterministic stream seed for sub-task `index` of a computation seeded by
/// `seed` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace dissipasynth
