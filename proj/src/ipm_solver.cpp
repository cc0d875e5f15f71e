#include "dissipasynth/ipm_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace dissipasynth {

namespace {

struct Block {
  Matrix F0;
  std::vector<std::pair<Eigen::Index, Matrix>> coeffs;
  double scale = 1.0;  // rows of the original LMI were divided by this
};

struct CoreResult {
  bool converged = false;
  bool diverged = false;
  Vector x;
  int iterations = 0;
  double gap = 0.0;
  double pinf = 0.0;
  double dinf = 0.0;
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kResidualTol = 1e-9;
// Accepted when the iteration stalls: every measure within 100x its target.
constexpr double kLooseFactor = 100.0;

Matrix apply_map(const Block& b, const Vector& x) {
  Matrix out = Matrix::Zero(b.F0.rows(), b.F0.cols());
  for (const auto& [s, c] : b.coeffs) out.noalias() += x(s) * c;
  return out;
}

// Largest step a with X + a dX ⪰ 0 (kInf when unrestricted).
double max_step(const Eigen::LLT<Matrix>& chol, const Matrix& dX) {
  const auto& L = chol.matrixL();
  Matrix W = L.solve(dX);
  W = L.solve(W.transpose()).transpose();
  W = 0.5 * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(W, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  return lo >= 0.0 ? kInf : -1.0 / lo;
}

double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

CoreResult run_ipm(const std::vector<Block>& blocks, const Vector& c, Eigen::Index m,
                   const SdpOptions& opt) {
  CoreResult res;
  const std::size_t K = blocks.size();
  Eigen::Index total_dim = 0;
  double f0_norm = 0.0;
  double f_max = 0.0;
  for (const auto& b : blocks) {
    total_dim += b.F0.rows();
    f0_norm = std::max(f0_norm, b.F0.norm());
    for (const auto& [s, cf] : b.coeffs) f_max = std::max(f_max, cf.norm());
  }
  const double c_norm = c.norm();

  Vector x = Vector::Zero(m);
  std::vector<Matrix> S(K), Z(K);
  {
    const double xi_s = std::max({10.0, f0_norm, f_max});
    double xi_z = 10.0;
    for (Eigen::Index i = 0; i < m; ++i)
      xi_z = std::max(xi_z, std::abs(c(i)) * 10.0 / (1.0 + f_max));
    for (std::size_t k = 0; k < K; ++k) {
      const auto d = blocks[k].F0.rows();
      S[k] = xi_s * Matrix::Identity(d, d);
      Z[k] = xi_z * Matrix::Identity(d, d);
    }
  }

  double best_merit = kInf;
  res.x = x;
  std::vector<Matrix> Sinv(K), Rd(K), dS(K), dZ(K), dSa(K), dZa(K), G(K), Ft;
  std::vector<Eigen::LLT<Matrix>> cholS(K), cholZ(K);
  Matrix M(m, m);
  Vector rp(m);

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    double mu_num = 0.0;
    double rd_norm2 = 0.0;
    double dobj = 0.0;
    rp = c;
    for (std::size_t k = 0; k < K; ++k) {
      const Block& b = blocks[k];
      cholS[k].compute(S[k]);
      cholZ[k].compute(Z[k]);
      if (cholS[k].info() != Eigen::Success || cholZ[k].info() != Eigen::Success) {
        res.converged = best_merit <= kLooseFactor;
        return res;
      }
      Sinv[k] = cholS[k].solve(Matrix::Identity(S[k].rows(), S[k].cols()));
      Sinv[k] = 0.5 * (Sinv[k] + Sinv[k].transpose());
      Rd[k] = b.F0 + apply_map(b, x) - S[k];
      rd_norm2 += Rd[k].squaredNorm();
      mu_num += inner(S[k], Z[k]);
      dobj -= inner(b.F0, Z[k]);
      for (const auto& [s, cf] : b.coeffs) rp(s) -= inner(cf, Z[k]);
    }
    const double mu = mu_num / static_cast<double>(total_dim);
    const double pobj = c.dot(x);
    const double gap = mu_num / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double pinf = std::sqrt(rd_norm2) / (1.0 + f0_norm);
    const double dinf = rp.norm() / (1.0 + c_norm);

    // Rounding in S^-1 grows as S approaches the boundary, so the residuals
    // can deteriorate once the gap is tiny; keep the best iterate seen.
    const double merit = std::max({gap / opt.gap_tol, pinf / kResidualTol, dinf / kResidualTol});
    if (merit < best_merit) {
      best_merit = merit;
      res.gap = gap;
      res.pinf = pinf;
      res.dinf = dinf;
      res.x = x;
    }
    if (merit <= 1.0) {
      res.converged = true;
      return res;
    }
    if (gap < 1e-3 * opt.gap_tol || (it > 0 && merit > 1e3 * best_merit)) {
      res.converged = best_merit <= kLooseFactor;
      return res;
    }
    double z_norm = 0.0;
    for (const auto& z : Z) z_norm = std::max(z_norm, z.norm());
    if (x.norm() > 1e10 * (1.0 + f0_norm) || z_norm > 1e12 * (1.0 + c_norm + f0_norm)) {
      res.diverged = true;
      res.x = x;
      return res;
    }

    // Nesterov-Todd scaling G = R R^T with G S G = Z. With S = L L^T and
    // L^T Z L = Q diag(lam) Q^T, R = L^-T Q diag(lam^1/4). The Schur complement
    // M_ij = sum_k tr(F_i G F_j G) is the Gram matrix of R^T F_i R.
    M.setZero();
    for (std::size_t k = 0; k < K; ++k) {
      const Block& b = blocks[k];
      const auto d = S[k].rows();
      const Matrix L = cholS[k].matrixL();
      const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
      Eigen::SelfAdjointEigenSolver<Matrix> es(L.transpose() * Z[k] * L);
      const Vector lam = es.eigenvalues().cwiseMax(0.0);
      const Matrix R = Linv.transpose() * es.eigenvectors() * lam.array().sqrt().sqrt().matrix().asDiagonal();
      G[k] = R * R.transpose();
      Ft.resize(b.coeffs.size());
      for (std::size_t j = 0; j < b.coeffs.size(); ++j)
        Ft[j].noalias() = R.transpose() * b.coeffs[j].second * R;
      for (std::size_t i = 0; i < b.coeffs.size(); ++i) {
        const auto si = b.coeffs[i].first;
        for (std::size_t j = i; j < b.coeffs.size(); ++j) {
          const auto sj = b.coeffs[j].first;
          const double v = inner(Ft[i], Ft[j]);
          M(si, sj) += v;
          if (si != sj) M(sj, si) += v;
        }
      }
    }
    M = 0.5 * (M + M.transpose());
    const double reg = 1e-13 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
    M.diagonal().array() += reg;
    Eigen::LDLT<Matrix> ldlt(M);
    if (ldlt.info() != Eigen::Success) {
      res.converged = best_merit <= kLooseFactor;
      return res;
    }

    // Solves for a direction with centering target sigma*mu and optional
    // second-order correction term dSa*dZa.
    auto direction = [&](double target, bool corrector, Vector& dx) {
      std::vector<Matrix> R(K);
      Vector rhs = -rp;
      // dZ = target S^-1 - Z - corr - G dS G with dS = F(dx) + Rd.
      for (std::size_t k = 0; k < K; ++k) {
        Matrix T = -Z[k];
        if (target != 0.0) T += target * Sinv[k];
        if (corrector) {
          const Matrix c = Sinv[k] * (dSa[k] * dZa[k]);
          T -= 0.5 * (c + c.transpose());
        }
        const Matrix Tr = T - G[k] * Rd[k] * G[k];
        for (const auto& [s, cf] : blocks[k].coeffs) rhs(s) += inner(cf, Tr);
        R[k] = std::move(T);
      }
      dx = ldlt.solve(rhs);
      for (std::size_t k = 0; k < K; ++k) {
        dS[k] = apply_map(blocks[k], dx) + Rd[k];
        Matrix t = R[k] - G[k] * dS[k] * G[k];
        dZ[k] = 0.5 * (t + t.transpose());
      }
    };
    auto step_lengths = [&](double& ap, double& ad) {
      ap = kInf;
      ad = kInf;
      for (std::size_t k = 0; k < K; ++k) {
        ap = std::min(ap, max_step(cholS[k], dS[k]));
        ad = std::min(ad, max_step(cholZ[k], dZ[k]));
      }
    };

    Vector dx;
    direction(0.0, false, dx);
    double ap = 0.0, ad = 0.0;
    step_lengths(ap, ad);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      mu_aff += inner(S[k] + ap * dS[k], Z[k] + ad * dZ[k]);
      dSa[k] = dS[k];
      dZa[k] = dZ[k];
    }
    mu_aff /= static_cast<double>(total_dim);
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);
    // Stay closer to the central path while the iterates are infeasible.
    if (res.pinf > 1e-6 || res.dinf > 1e-6) sigma = std::max(sigma, 0.1 * std::min(1.0, ap + ad));

    direction(sigma * mu, true, dx);
    step_lengths(ap, ad);
    const double tau = 0.95;
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);

    x += ap * dx;
    for (std::size_t k = 0; k < K; ++k) {
      S[k] += ap * dS[k];
      S[k] = 0.5 * (S[k] + S[k].transpose());
      Z[k] += ad * dZ[k];
      Z[k] = 0.5 * (Z[k] + Z[k].transpose());
    }
  }
  res.converged = best_merit <= kLooseFactor;
  return res;
}

std::vector<Block> make_blocks(const SdpProblem& problem) {
  std::vector<Block> blocks;
  for (const auto& lmi : problem.constraints()) {
    Block b;
    double scale = lmi.constant.cwiseAbs().maxCoeff();
    for (const auto& [s, cf] : lmi.coeffs) scale = std::max(scale, cf.cwiseAbs().maxCoeff());
    b.scale = std::max(1.0, scale);
    b.F0 = lmi.constant / b.scale;
    for (const auto& [s, cf] : lmi.coeffs) b.coeffs.emplace_back(s, cf / b.scale);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

// Worst eigenvalue over the scaled blocks, i.e. relative to each LMI's
// largest coefficient.
double scaled_worst_slack(const std::vector<Block>& blocks, const Vector& x) {
  double worst = kInf;
  for (const auto& b : blocks) worst = std::min(worst, min_eigenvalue(b.F0 + apply_map(b, x)));
  return worst;
}

double best_slack(const std::vector<Block>& blocks, Eigen::Index m, const SdpOptions& opt,
                  Vector& x_out) {
  // maximize t  s.t.  F_k(x) - t I ⪰ 0 (in original units), t <= 1
  std::vector<Block> aug = blocks;
  const Eigen::Index t = m;
  for (auto& b : aug) {
    const auto d = b.F0.rows();
    b.coeffs.emplace_back(t, -Matrix::Identity(d, d) / b.scale);
  }
  Block cap;
  cap.F0 = Matrix::Ones(1, 1);
  cap.coeffs.emplace_back(t, -Matrix::Ones(1, 1));
  aug.push_back(cap);
  Vector c = Vector::Zero(m + 1);
  c(t) = -1.0;
  SdpOptions phase = opt;
  phase.max_iter = std::max(opt.max_iter, 150);
  const CoreResult r = run_ipm(aug, c, m + 1, phase);
  x_out = r.x.head(m);
  return r.x(t);
}

}  // namespace

SdpSolution InteriorPointBackend::solve(const SdpProblem& problem,
                                        const SdpOptions& options) const {
  const Eigen::Index m = problem.num_slots();
  const std::vector<Block> blocks = make_blocks(problem);
  Vector c = problem.objective() ? *problem.objective() : Vector::Zero(m);
  const double c_scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  c /= c_scale;

  SdpSolution sol;
  const CoreResult r = run_ipm(blocks, c, m, options);
  sol.iterations = r.iterations;
  sol.x = r.x;
  const bool feasible_point = scaled_worst_slack(blocks, r.x) >= -options.feas_tol;
  if (r.converged && feasible_point) {
    sol.status = SdpStatus::optimal;
    return sol;
  }

  Vector x1;
  const double t = best_slack(blocks, m, options, x1);
  if (t < -options.feas_tol) {
    sol.status = SdpStatus::infeasible;
    sol.x = x1;
    sol.message = "best achievable slack " + std::to_string(t);
    return sol;
  }
  if (r.diverged) {
    sol.status = SdpStatus::error;
    sol.message = "iterates diverged on a feasible problem: objective appears unbounded";
    return sol;
  }
  sol.status = SdpStatus::inaccurate;
  sol.message = "no convergence (gap " + std::to_string(r.gap) + ", primal residual " +
                std::to_string(r.pinf) + ", dual residual " + std::to_string(r.dinf) + ")";
  if (!feasible_point && scaled_worst_slack(blocks, x1) >= -options.feas_tol) sol.x = x1;
  return sol;
}

const SdpBackend& default_backend() {
  static const InteriorPointBackend backend;
  return backend;
}

}  // namespace dissipasynth
