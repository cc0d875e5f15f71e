#include "dissipasynth/model.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace dissipasynth {

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << m.rows()
       << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericalError(what + ": contains NaN or Inf");
}

void Plant::validate(Eigen::Index cap) const {
  const auto nn = n(), pp = p(), mm = m(), qq = q(), ll = l();
  if (nn < 1) throw DimensionError("A: plant needs at least one state");
  if (pp < 1 || mm < 1 || qq < 1 || ll < 1)
    throw DimensionError("plant dimensions p, m, q, l must be positive");
  for (auto d : {nn, pp, mm, qq, ll})
    if (d > cap) throw DimensionError("plant dimension exceeds cap");
  require_shape(A, nn, nn, "A");
  require_shape(B1, nn, pp, "B1");
  require_shape(B, nn, mm, "B");
  require_shape(C1, qq, nn, "C1");
  require_shape(D1, qq, pp, "D1");
  require_shape(E, qq, mm, "E");
  require_shape(C, ll, nn, "C");
  require_shape(F, ll, pp, "F");
  require_finite(A, "A");
  require_finite(B1, "B1");
  require_finite(B, "B");
  require_finite(C1, "C1");
  require_finite(D1, "D1");
  require_finite(E, "E");
  require_finite(C, "C");
  require_finite(F, "F");
}

void Controller::validate_against(const Plant& plant) const {
  const auto n = plant.n(), m = plant.m(), l = plant.l();
  require_shape(Ac, n, n, "Ac");
  require_shape(Bc, n, l, "Bc");
  require_shape(Cc, m, n, "Cc");
  require_shape(Dc, m, l, "Dc");
  require_finite(Ac, "Ac");
  require_finite(Bc, "Bc");
  require_finite(Cc, "Cc");
  require_finite(Dc, "Dc");
}

void StateSpace::validate() const {
  const auto nu = A.rows();
  require_shape(A, nu, nu, "A");
  require_shape(B, nu, B.cols(), "B");
  require_shape(C, C.rows(), nu, "C");
  require_shape(D, C.rows(), B.cols(), "D");
  require_finite(A, "A");
  require_finite(B, "B");
  require_finite(C, "C");
  require_finite(D, "D");
}

StateSpace close_loop(const Plant& plant, const Controller& ctrl) {
  plant.validate();
  ctrl.validate_against(plant);
  const auto n = plant.n();
  const auto p = plant.p();
  const auto q = plant.q();

  StateSpace cl;
  cl.A.resize(2 * n, 2 * n);
  cl.A.topLeftCorner(n, n) = plant.A + plant.B * ctrl.Dc * plant.C;
  cl.A.topRightCorner(n, n) = plant.B * ctrl.Cc;
  cl.A.bottomLeftCorner(n, n) = ctrl.Bc * plant.C;
  cl.A.bottomRightCorner(n, n) = ctrl.Ac;

  cl.B.resize(2 * n, p);
  cl.B.topRows(n) = plant.B1 + plant.B * ctrl.Dc * plant.F;
  cl.B.bottomRows(n) = ctrl.Bc * plant.F;

  cl.C.resize(q, 2 * n);
  cl.C.leftCols(n) = plant.C1 + plant.E * ctrl.Dc * plant.C;
  cl.C.rightCols(n) = plant.E * ctrl.Cc;

  cl.D = plant.D1 + plant.E * ctrl.Dc * plant.F;
  return cl;
}

Trajectory simulate(const StateSpace& sys, const Vector& x0,
                    const std::vector<Vector>& inputs) {
  sys.validate();
  if (inputs.empty()) throw PreconditionError("simulate: horizon must be >= 1");
  require_shape(x0, sys.states(), 1, "x0");
  Trajectory out;
  out.states.reserve(inputs.size() + 1);
  out.outputs.reserve(inputs.size());
  out.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    require_shape(inputs[k], sys.inputs(), 1, "inputs[" + std::to_string(k) + "]");
    const Vector& x = out.states.back();
    out.outputs.push_back(sys.C * x + sys.D * inputs[k]);
    out.states.push_back(sys.A * x + sys.B * inputs[k]);
  }
  return out;
}

double spectral_radius(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

double gain_at(const StateSpace& sys, double theta) {
  using Complex = std::complex<double>;
  const auto nu = sys.states();
  if (nu == 0 || sys.B.cols() == 0 || sys.C.rows() == 0) {
    if (sys.D.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(sys.D);
    return svd.singularValues()(0);
  }
  const Complex z = std::polar(1.0, theta);
  Eigen::MatrixXcd resolvent = -sys.A.cast<Complex>();
  resolvent.diagonal().array() += z;
  const Eigen::MatrixXcd h = sys.C.cast<Complex>() *
                                 resolvent.partialPivLu().solve(sys.B.cast<Complex>()) +
                             sys.D.cast<Complex>();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h);
  return svd.singularValues()(0);
}

namespace {

FrequencyCurve make_curve(int grid_size) {
  FrequencyCurve curve;
  curve.grid.resize(static_cast<std::size_t>(grid_size));
  curve.gain.resize(static_cast<std::size_t>(grid_size));
  const double step = std::numbers::pi / (grid_size - 1);
  for (int j = 0; j < grid_size; ++j) curve.grid[j] = step * j;
  curve.grid.back() = std::numbers::pi;
  return curve;
}

void locate_peak(FrequencyCurve& curve) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < curve.gain.size(); ++j)
    if (curve.gain[j] > curve.gain[best]) best = j;
  curve.peak = {curve.grid[best], curve.gain[best]};
}

}  // namespace

FrequencyCurve frequency_response(const StateSpace& sys, int grid_size, Exec exec) {
  sys.validate();
  if (grid_size < 2) throw PreconditionError("frequency_response: grid_size must be >= 2");
  if (spectral_radius(sys.A) >= 1.0) throw NumericalError("system not Schur stable");

  FrequencyCurve curve = make_curve(grid_size);
  if (exec == Exec::serial) {
    for (int j = 0; j < grid_size; ++j) curve.gain[j] = gain_at(sys, curve.grid[j]);
  } else {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < grid_size; ++j) curve.gain[j] = gain_at(sys, curve.grid[j]);
  }
  locate_peak(curve);
  return curve;
}

bool is_regular(const Matrix& M, double* condition) {
  if (M.rows() != M.cols() || M.size() == 0) {
    if (condition) *condition = std::numeric_limits<double>::infinity();
    return M.size() == 0;
  }
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  return smax > 0.0 && smin > kRegularTol * smax;
}

Controller transform_realization(const Controller& ctrl, const Matrix& L) {
  const auto n = ctrl.Ac.rows();
  require_shape(L, n, n, "L");
  double cond = 0.0;
  if (!is_regular(L, &cond)) {
    std::ostringstream os;
    os << "transform_realization: L is numerically singular (condition " << cond << ")";
    throw NumericalError(os.str());
  }
  const Matrix Linv = L.partialPivLu().inverse();
  Controller out;
  out.Ac = L * ctrl.Ac * Linv;
  out.Bc = L * ctrl.Bc;
  out.Cc = ctrl.Cc * Linv;
  out.Dc = ctrl.Dc;
  return out;
}

}  // namespace dissipasynth
