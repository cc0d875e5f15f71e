#include "dissipasynth/data.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/SVD>

#include "dissipasynth/lmi.hpp"

namespace dissipasynth {

void DataRecord::validate() const {
  const auto N = Xminus.cols();
  if (N < 1) throw DimensionError("DataRecord: horizon must be >= 1");
  require_shape(Xplus, Xminus.rows(), N, "Xplus");
  if (Uminus.cols() != N) throw DimensionError("Uminus: column count differs from Xminus");
  if (Wminus_true && Wminus_true->cols() != N)
    throw DimensionError("Wminus_true: column count differs from Xminus");
  require_finite(Xplus, "Xplus");
  require_finite(Xminus, "Xminus");
  require_finite(Uminus, "Uminus");
}

void DisturbanceBound::validate() const {
  const auto p = Phi11.rows();
  const auto N = Phi22.rows();
  require_shape(Phi11, p, p, "Phi11");
  require_shape(Phi12, p, N, "Phi12");
  require_shape(Phi22, N, N, "Phi22");
  if (!is_negdef(Phi22)) throw PreconditionError("DisturbanceBound: Phi22 must be negative definite");
  const Matrix schur = Phi11 - Phi12 * Phi22.ldlt().solve(Phi12.transpose());
  if (!is_psd(0.5 * (schur + schur.transpose())))
    throw PreconditionError("DisturbanceBound: disturbance set is empty");
}

double DisturbanceBound::margin(const Matrix& W) const {
  require_shape(W, p(), horizon(), "W");
  Matrix q = Phi11 + Phi12 * W.transpose() + W * Phi12.transpose() + W * Phi22 * W.transpose();
  return min_eigenvalue(0.5 * (q + q.transpose()));
}

Matrix ConsistencySet::quadratic_form(const Matrix& A, const Matrix& B) const {
  require_shape(A, n, n, "A");
  require_shape(B, n, m, "B");
  Matrix G(n, 2 * n + m);
  G << Matrix::Identity(n, n), A, B;
  Matrix q = G * phi_tilde * G.transpose();
  return 0.5 * (q + q.transpose());
}

DataRecord record(const Plant& plant, const std::vector<Vector>& u_seq,
                  const std::vector<Vector>& w_seq, const Vector& x0) {
  plant.validate();
  if (u_seq.empty() || u_seq.size() != w_seq.size())
    throw DimensionError("record: u_seq and w_seq must have equal length >= 1");
  require_shape(x0, plant.n(), 1, "x0");
  const auto N = static_cast<Eigen::Index>(u_seq.size());
  DataRecord rec;
  rec.Xminus.resize(plant.n(), N);
  rec.Xplus.resize(plant.n(), N);
  rec.Uminus.resize(plant.m(), N);
  Matrix W(plant.p(), N);
  Vector x = x0;
  for (Eigen::Index k = 0; k < N; ++k) {
    const auto& u = u_seq[static_cast<std::size_t>(k)];
    const auto& w = w_seq[static_cast<std::size_t>(k)];
    require_shape(u, plant.m(), 1, "u_seq[" + std::to_string(k) + "]");
    require_shape(w, plant.p(), 1, "w_seq[" + std::to_string(k) + "]");
    rec.Xminus.col(k) = x;
    rec.Uminus.col(k) = u;
    W.col(k) = w;
    x = plant.A * x + plant.B * u + plant.B1 * w;
    rec.Xplus.col(k) = x;
  }
  rec.Wminus_true = std::move(W);
  return rec;
}

DisturbanceBound energy_phi(double eps, Eigen::Index N, Eigen::Index p) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw PreconditionError("energy_eps must be positive");
  if (N < 1 || p < 1) throw DimensionError("energy_phi: N and p must be >= 1");
  DisturbanceBound b;
  b.Phi11 = eps * eps * static_cast<double>(N) * Matrix::Identity(p, p);
  b.Phi12 = Matrix::Zero(p, N);
  b.Phi22 = -Matrix::Identity(N, N);
  return b;
}

ConsistencySet build_phi_tilde(const DataRecord& rec, const DisturbanceBound& bound,
                               const Matrix& B1) {
  rec.validate();
  const auto n = rec.n();
  const auto m = rec.m();
  const auto N = rec.horizon();
  const auto p = bound.p();
  require_shape(bound.Phi11, p, p, "Phi11");
  require_shape(bound.Phi12, p, N, "Phi12");
  require_shape(bound.Phi22, N, N, "Phi22");
  require_shape(B1, n, p, "B1");

  Matrix phi(n + N, n + N);
  phi.topLeftCorner(n, n) = B1 * bound.Phi11 * B1.transpose();
  phi.topRightCorner(n, N) = B1 * bound.Phi12;
  phi.bottomLeftCorner(N, n) = phi.topRightCorner(n, N).transpose();
  phi.bottomRightCorner(N, N) = bound.Phi22;

  Matrix M = Matrix::Zero(n + N, 2 * n + m);
  M.topLeftCorner(n, n).setIdentity();
  M.block(n, 0, N, n) = rec.Xplus.transpose();
  M.block(n, n, N, n) = -rec.Xminus.transpose();
  M.block(n, 2 * n, N, m) = -rec.Uminus.transpose();

  ConsistencySet cs;
  cs.n = n;
  cs.m = m;
  const Matrix t = M.transpose() * phi * M;
  cs.phi_tilde = 0.5 * (t + t.transpose());
  return cs;
}

AssumptionReport check_assumptions(const DataRecord& rec, const ConsistencySet& cs) {
  AssumptionReport r;
  Matrix stacked(rec.n() + rec.m(), rec.horizon());
  stacked << rec.Xminus, rec.Uminus;
  Eigen::JacobiSVD<Matrix> svd(stacked);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-8 * smax && smax > 0.0) ++r.rank;
  r.rank_ok = r.rank == rec.n() + rec.m();

  const Matrix k22 = cs.k22();
  r.k22_negdef = is_negdef(k22);
  if (r.k22_negdef) {
    const Matrix k12 = cs.k12();
    Matrix schur = cs.phi11() - k12 * k22.ldlt().solve(k12.transpose());
    r.sigma_nonempty = is_psd(0.5 * (schur + schur.transpose()));
  }
  return r;
}

Membership membership(const Matrix& A, const Matrix& B, const ConsistencySet& cs, double tol) {
  const Matrix q = cs.quadratic_form(A, B);
  Membership out;
  out.margin = min_eigenvalue(q);
  const double scale = q.size() ? q.operatorNorm() : 0.0;
  out.inside = out.margin >= -tol * (1.0 + scale);
  return out;
}

std::pair<Matrix, Matrix> nominal_system(ConsistencySet& cs) {
  const Matrix k22 = cs.k22();
  if (!is_negdef(k22))
    throw PreconditionError(
        "nominal_system: [[PhiT22, PhiT23], [PhiT23^T, PhiT33]] is not negative definite; "
        "run check_assumptions on the data record");
  const Matrix rhs = cs.k12().transpose();  // (n + m) x n
  const Matrix sol = -k22.ldlt().solve(rhs);
  cs.As = sol.topRows(cs.n).transpose();
  cs.Bs = sol.bottomRows(cs.m).transpose();
  cs.has_nominal = true;
  cs.has_factor = false;
  return {cs.As, cs.Bs};
}

void residual_factor(ConsistencySet& cs, double tol) {
  if (!cs.has_nominal) throw PreconditionError("residual_factor: run nominal_system first");
  const Matrix res = cs.quadratic_form(cs.As, cs.Bs);
  Matrix AB(cs.n, cs.n + cs.m);
  AB << cs.As, cs.Bs;
  const double scale = cs.phi_tilde.operatorNorm() * (1.0 + AB.squaredNorm());
  // psd_factor thresholds at tol * (1 + ||res||); rescale to the cancellation size.
  const double eff_tol = tol * (1.0 + scale) / (1.0 + res.operatorNorm());
  PsdFactor f;
  try {
    f = psd_factor(res, eff_tol);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("residual_factor: Sigma empty or tolerance too tight (") +
                         e.what() + ")");
  }
  cs.Xi = f.U;
  cs.Lambda = f.D;
  cs.has_factor = true;
}

ConsistencySet make_consistency_set(const DataRecord& rec, const DisturbanceBound& bound,
                                    const Matrix& B1, double tol) {
  ConsistencySet cs = build_phi_tilde(rec, bound, B1);
  nominal_system(cs);
  residual_factor(cs, tol);
  return cs;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::pair<Matrix, Matrix> ray_sample(const ConsistencySet& cs, std::uint64_t seed, bool boundary) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix dA(cs.n, cs.n), dB(cs.n, cs.m);
  for (Eigen::Index i = 0; i < dA.size(); ++i) dA.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < dB.size(); ++i) dB.data()[i] = g(rng);
  const double norm = std::sqrt(dA.squaredNorm() + dB.squaredNorm());
  dA /= norm;
  dB /= norm;

  auto margin = [&](double s) {
    return min_eigenvalue(cs.quadratic_form(cs.As + s * dA, cs.Bs + s * dB));
  };
  // Sigma is bounded (K22 ≺ 0), so the margin turns negative along every ray.
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 200 && margin(hi) >= 0.0; ++i) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (margin(mid) >= 0.0 ? lo : hi) = mid;
  }
  double s = lo;
  if (!boundary) s *= std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return {cs.As + s * dA, cs.Bs + s * dB};
}

}  // namespace

MemberSamples sample_members(const ConsistencySet& cs, int count, std::uint64_t seed, Exec exec) {
  if (!cs.has_nominal || !cs.has_factor)
    throw PreconditionError("sample_members: consistency set is incomplete");
  MemberSamples out;
  if (count <= 0) return out;
  out.members.resize(static_cast<std::size_t>(count));
  out.members[0] = {cs.As, cs.Bs};
  if (cs.ntilde() == 0) {
    out.degenerate = true;
    for (auto& mem : out.members) mem = {cs.As, cs.Bs};
    return out;
  }
  auto draw = [&](int i) {
    out.members[static_cast<std::size_t>(i)] =
        ray_sample(cs, derive_seed(seed, static_cast<std::uint64_t>(i)), i % 2 == 1);
  };
  if (exec == Exec::serial) {
    for (int i = 1; i < count; ++i) draw(i);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int i = 1; i < count; ++i) draw(i);
  }
  return out;
}

}  // namespace dissipasynth
