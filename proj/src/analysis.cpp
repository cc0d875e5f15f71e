#include "dissipasynth/analysis.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "dissipasynth/data.hpp"

namespace dissipasynth {

Matrix dissipation_lmi(const StateSpace& sys, const Matrix& P, const Matrix& Q, const Matrix& S,
                       const Matrix& R) {
  const auto nu = sys.states();
  const auto rho = sys.inputs();
  const auto sigma = sys.C.rows();
  require_shape(P, nu, nu, "P");
  require_shape(Q, rho, rho, "Q");
  require_shape(S, rho, sigma, "S");
  require_shape(R, sigma, sigma, "R");
  const Matrix& A = sys.A;
  const Matrix& B = sys.B;
  const Matrix& C = sys.C;
  const Matrix& D = sys.D;
  Matrix out(nu + rho, nu + rho);
  out.topLeftCorner(nu, nu) = A.transpose() * P * A - P + C.transpose() * R * C;
  out.topRightCorner(nu, rho) =
      A.transpose() * P * B + C.transpose() * S.transpose() + C.transpose() * R * D;
  out.bottomLeftCorner(rho, nu) = out.topRightCorner(nu, rho).transpose();
  const Matrix SD = S * D;
  out.bottomRightCorner(rho, rho) =
      B.transpose() * P * B + Q + SD + SD.transpose() + D.transpose() * R * D;
  return 0.5 * (out + out.transpose());
}

namespace {

struct CertifyOutcome {
  Matrix P;
  double slack = -std::numeric_limits<double>::infinity();
};

// Lower-triangular L with L L^T = sum_k (A^T)^k A^k (Smith doubling), or
// nothing when A is not Schur stable or the series converges too slowly.
// Sum of A^k Q (A^k)^T by doubling; nullopt unless rho(A) < 1 and the
// series has converged.
std::optional<Matrix> stein_sum(const Matrix& A, const Matrix& Q) {
  if (A.rows() == 0 || !(spectral_radius(A) < 1.0)) return std::nullopt;
  Matrix W = Q;
  Matrix Ak = A;
  for (int k = 0; k < 64; ++k) {
    W += Ak * W * Ak.transpose();
    Ak = Ak * Ak;
    if (Ak.norm() < 1e-16) break;
  }
  if (!W.allFinite() || Ak.norm() >= 1e-16) return std::nullopt;
  return Matrix(0.5 * (W + W.transpose()));
}

// State coordinates x = T x_hat.
struct Coordinates {
  Matrix T, Tinv;
};

// x_hat = L^T x with A^T P0 A - P0 = -I, P0 = L L^T: A_hat is a contraction.
std::optional<Coordinates> lyapunov_coordinates(const StateSpace& sys) {
  const auto P0 = stein_sum(sys.A.transpose(), Matrix::Identity(sys.states(), sys.states()));
  if (!P0) return std::nullopt;
  Eigen::LLT<Matrix> llt(*P0);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Matrix Lt = llt.matrixU();
  const Matrix LtInv = Lt.triangularView<Eigen::Upper>().solve(Matrix::Identity(Lt.rows(), Lt.cols()));
  return Coordinates{LtInv, Lt};
}

// Balanced realization of slightly regularized Gramians, so that input and
// output scaling are equalized as well.
std::optional<Coordinates> gramian_coordinates(const StateSpace& sys) {
  const auto nu = sys.states();
  const Matrix I = Matrix::Identity(nu, nu);
  auto normalized = [&](const Matrix& G) {
    const double s = G.norm();
    return Matrix((s > 0.0 ? Matrix(G / s) : Matrix(Matrix::Zero(nu, nu))) + 1e-6 * I);
  };
  const auto Wc = stein_sum(sys.A, normalized(sys.B * sys.B.transpose()));
  const auto Wo = stein_sum(sys.A.transpose(), normalized(sys.C.transpose() * sys.C));
  if (!Wc || !Wo) return std::nullopt;
  Eigen::LLT<Matrix> llt(*Wc);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Matrix Lc = llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Lc.transpose() * *Wo * Lc);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) return std::nullopt;
  const Vector q = eig.eigenvalues().array().pow(0.25).matrix();
  const Matrix LcInv = Lc.triangularView<Eigen::Lower>().solve(I);
  return Coordinates{Lc * eig.eigenvectors() * q.cwiseInverse().asDiagonal(),
                     q.asDiagonal() * eig.eigenvectors().transpose() * LcInv};
}

CertifyOutcome solve_dissipation_slack(const StateSpace& sys, const Matrix& Q, const Matrix& S,
                                       const Matrix& R, const SdpOptions& options,
                                       const SdpBackend& backend);

CertifyOutcome in_coordinates(const StateSpace& sys, const Coordinates& c, const Matrix& Q,
                              const Matrix& S, const Matrix& R, const SdpOptions& options,
                              const SdpBackend& backend) {
  const StateSpace hat{c.Tinv * sys.A * c.T, c.Tinv * sys.B, sys.C * c.T, sys.D};
  CertifyOutcome out = solve_dissipation_slack(hat, Q, S, R, options, backend);
  if (out.P.size()) {
    out.P = c.Tinv.transpose() * out.P * c.Tinv;
    out.P = 0.5 * (out.P + out.P.transpose());
  }
  return out;
}

// The SDP is solved in rescaled state coordinates; P is mapped back to the
// original ones and the slack is the one measured in the rescaled frame.
// Lyapunov-balanced coordinates are tried first, Gramian-balanced ones when
// those give no positive slack.
CertifyOutcome max_dissipation_slack(const StateSpace& sys, const Matrix& Q, const Matrix& S,
                                     const Matrix& R, const SdpOptions& options,
                                     const SdpBackend& backend) {
  sys.validate();
  const auto lyap = lyapunov_coordinates(sys);
  if (!lyap) return solve_dissipation_slack(sys, Q, S, R, options, backend);
  CertifyOutcome out = in_coordinates(sys, *lyap, Q, S, R, options, backend);
  if (out.slack > kAcceptSlack) return out;
  if (const auto gram = gramian_coordinates(sys)) {
    CertifyOutcome alt = in_coordinates(sys, *gram, Q, S, R, options, backend);
    if (alt.slack > out.slack) out = std::move(alt);
  }
  return out;
}

CertifyOutcome solve_dissipation_slack(const StateSpace& sys, const Matrix& Q, const Matrix& S,
                                       const Matrix& R, const SdpOptions& options,
                                       const SdpBackend& backend) {
  sys.validate();
  const auto nu = sys.states();
  const auto rho = sys.inputs();
  require_shape(Q, rho, rho, "Q");
  require_shape(S, rho, sys.C.rows(), "S");
  require_shape(R, sys.C.rows(), sys.C.rows(), "R");

  SdpProblem prob;
  prob.add_variable("P", VarKind::symmetric, nu, nu);
  prob.add_variable("t");
  const Eigen::Index slots = prob.num_slots();
  prob.add_constraint(linearize("P", slots, [&](const Vector& x, double) {
    Matrix m = prob.unpack("P", x);
    m.diagonal().array() -= x(prob.slot("t"));
    return m;
  }));
  const Matrix zeroP = Matrix::Zero(nu, nu);
  const Matrix constant = -dissipation_lmi(sys, zeroP, Q, S, R);
  prob.add_constraint(linearize("dissipation", slots, [&](const Vector& x, double w) {
    const Matrix P = prob.unpack("P", x);
    Matrix m = w * constant - (dissipation_lmi(sys, P, Q, S, R) + constant);
    m.diagonal().array() -= x(prob.slot("t"));
    return m;
  }));
  prob.add_constraint(linearize("cap", slots, [&](const Vector& x, double w) {
    return Matrix::Constant(1, 1, w - x(prob.slot("t")));
  }));
  prob.minimize("t", -1.0);

  CertifyOutcome out;
  SdpSolution sol = solve_sdp(prob, options, backend);
  if (sol.status == SdpStatus::inaccurate) {
    SdpOptions tight = options;
    tight.gap_tol *= 0.1;
    tight.max_iter *= 2;
    sol = solve_sdp(prob, tight, backend);
  }
  if (sol.x.size() != slots) return out;
  out.P = prob.unpack("P", sol.x);
  out.slack = std::min(min_eigenvalue(out.P),
                       -max_eigenvalue(dissipation_lmi(sys, out.P, Q, S, R)));
  return out;
}

}  // namespace

std::optional<Certificate> certify_dissipativity(const StateSpace& sys, const Matrix& Q,
                                                 const Matrix& S, const Matrix& R,
                                                 const SdpOptions& options,
                                                 const SdpBackend& backend, double accept_slack) {
  const CertifyOutcome o = max_dissipation_slack(sys, Q, S, R, options, backend);
  if (!(o.slack > accept_slack)) return std::nullopt;
  return Certificate{o.P, o.slack};
}

std::optional<Certificate> certify_dissipativity(const StateSpace& sys, const SupplyRate& supply,
                                                 const SdpOptions& options,
                                                 const SdpBackend& backend) {
  return certify_dissipativity(sys, supply.Q, supply.S, supply.R, options, backend);
}

WorstCaseReport worst_case_check(const SynthesisIngredients& ing, const Controller& ctrl,
                                 int samples, std::uint64_t seed, Exec exec, int grid_size,
                                 const SdpOptions& options) {
  ing.validate();
  WorstCaseReport rep;
  rep.samples = std::max(samples, 0);
  if (samples <= 0) {
    rep.vacuous = true;
    return rep;
  }
  const MemberSamples ms = sample_members(ing.cs, samples, seed, exec);
  rep.degenerate = ms.degenerate;
  rep.verdicts.resize(ms.members.size());

  auto one = [&](std::size_t i) {
    SampleVerdict& v = rep.verdicts[i];
    v.A = ms.members[i].first;
    v.B = ms.members[i].second;
    const StateSpace cl = close_loop(ing.plant(v.A, v.B), ctrl);
    v.stable = spectral_radius(cl.A) < 1.0;
    if (!v.stable) {
      v.peak_gain = std::numeric_limits<double>::infinity();
      v.slack = -std::numeric_limits<double>::infinity();
      return;
    }
    v.curve = frequency_response(cl, grid_size, Exec::serial);
    v.peak_gain = v.curve.peak.gain;
    const CertifyOutcome o =
        max_dissipation_slack(cl, ing.supply.Q, ing.supply.S, ing.supply.R, options,
                              default_backend());
    v.slack = o.slack;
    v.certified = o.slack > kAcceptSlack;
  };
  const int count = static_cast<int>(rep.verdicts.size());
  if (exec == Exec::serial) {
    for (int i = 0; i < count; ++i) one(static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) one(static_cast<std::size_t>(i));
  }

  rep.min_slack = std::numeric_limits<double>::infinity();
  for (const auto& v : rep.verdicts) {
    rep.all_certified = rep.all_certified && v.certified;
    rep.min_slack = std::min(rep.min_slack, v.slack);
    rep.worst_peak_gain = std::max(rep.worst_peak_gain, v.peak_gain);
  }
  return rep;
}

bool storage_trajectory_check(const StateSpace& sys, const Certificate& cert, const Matrix& Q,
                              const Matrix& S, const Matrix& R, int horizon, int trials,
                              std::uint64_t seed) {
  sys.validate();
  const auto nu = sys.states();
  const auto rho = sys.inputs();
  require_shape(cert.P, nu, nu, "P");
  require_shape(Q, rho, rho, "Q");
  require_shape(S, rho, sys.C.rows(), "S");
  require_shape(R, sys.C.rows(), sys.C.rows(), "R");
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector x(nu), w(rho);
    for (Eigen::Index i = 0; i < nu; ++i) x(i) = u(rng);
    for (int k = 0; k < horizon; ++k) {
      for (Eigen::Index i = 0; i < rho; ++i) w(i) = u(rng);
      const Vector z = sys.C * x + sys.D * w;
      const Vector xn = sys.A * x + sys.B * w;
      if (x.isZero(0.0) && w.isZero(0.0)) {
        x = xn;
        continue;
      }
      const double v0 = x.dot(cert.P * x);
      const double v1 = xn.dot(cert.P * xn);
      const double s = -(w.dot(Q * w) + 2.0 * w.dot(S * z) + z.dot(R * z));
      if (v1 - v0 - s >= 1e-9 * (1.0 + std::abs(v0) + std::abs(v1) + std::abs(s))) return false;
      x = xn;
    }
  }
  return true;
}

SLemmaResult s_lemma_check(const Matrix& M, const Matrix& K, Eigen::Index n, double alpha,
                           int samples, std::uint64_t seed, Exec exec) {
  const auto d = K.rows();
  require_shape(K, d, d, "K");
  require_shape(M, d, d, "M");
  if (n < 1 || n >= d) throw DimensionError("s_lemma_check: partition size must satisfy 1 <= n < dim");
  if (!(alpha >= 0.0)) throw PreconditionError("s_lemma_check: alpha must be nonnegative");
  const auto N = d - n;
  const Matrix K12 = K.topRightCorner(n, N);
  const Matrix K22 = K.bottomRightCorner(N, N);
  if (!is_negdef(K22)) throw PreconditionError("s_lemma_check: K22 must be negative definite");
  const Matrix center = -K22.ldlt().solve(K12.transpose());  // N x n
  const Matrix schur = K.topLeftCorner(n, n) + K12 * center;
  if (!is_psd(0.5 * (schur + schur.transpose())))
    throw PreconditionError("s_lemma_check: S_K is empty");

  SLemmaResult res;
  res.reduction_holds = is_posdef(M - alpha * K);
  if (!res.reduction_holds || samples <= 0) return res;

  auto form = [&](const Matrix& Mat, const Matrix& Z) {
    Matrix G(n, d);
    G << Matrix::Identity(n, n), Z.transpose();
    const Matrix f = G * Mat * G.transpose();
    return Matrix(0.5 * (f + f.transpose()));
  };
  std::vector<Matrix> Zs(static_cast<std::size_t>(samples));
  std::vector<char> bad(static_cast<std::size_t>(samples), 0);
  auto one = [&](int i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> g;
    Matrix dir(N, n);
    for (Eigen::Index j = 0; j < dir.size(); ++j) dir.data()[j] = g(rng);
    dir /= dir.norm();
    auto margin = [&](double s) { return min_eigenvalue(form(K, center + s * dir)); };
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 200 && margin(hi) >= 0.0; ++k) {
      lo = hi;
      hi *= 2.0;
    }
    for (int k = 0; k < 40; ++k) {
      const double mid = 0.5 * (lo + hi);
      (margin(mid) >= 0.0 ? lo : hi) = mid;
    }
    double s = lo;
    if (i % 2 == 1) s *= std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    Matrix Z = center + s * dir;
    const Matrix f = form(M, Z);
    bad[static_cast<std::size_t>(i)] = !(min_eigenvalue(f) > -kDefiniteTol * (1.0 + f.operatorNorm()));
    Zs[static_cast<std::size_t>(i)] = std::move(Z);
  };
  if (exec == Exec::serial) {
    for (int i = 0; i < samples; ++i) one(i);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < samples; ++i) one(i);
  }
  res.checked = samples;
  for (int i = 0; i < samples; ++i)
    if (bad[static_cast<std::size_t>(i)]) {
      res.counterexample = Zs[static_cast<std::size_t>(i)];
      break;
    }
  return res;
}

}  // namespace dissipasynth
