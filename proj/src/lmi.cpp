#include "dissipasynth/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace dissipasynth {

const char* to_string(Definiteness d) {
  switch (d) {
    case Definiteness::posdef: return "posdef";
    case Definiteness::psd: return "psd";
    case Definiteness::indef: return "indef";
    case Definiteness::negdef: return "negdef";
    case Definiteness::nsd: return "nsd";
  }
  return "?";
}

const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::inaccurate: return "inaccurate";
    case SdpStatus::error: return "error";
  }
  return "?";
}

namespace {

Vector sym_eigenvalues(const Matrix& M) {
  if (M.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solver failed");
  return es.eigenvalues();
}

double spectral_norm_from(const Vector& ev) {
  if (ev.size() == 0) return 0.0;
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

void require_square(const Matrix& M, const char* what) {
  if (M.rows() != M.cols()) throw DimensionError(std::string(what) + ": matrix must be square");
}

}  // namespace

Definiteness definiteness(const Matrix& M, double tol) {
  require_square(M, "definiteness");
  const Vector ev = sym_eigenvalues(M);
  if (ev.size() == 0) return Definiteness::psd;
  const double thr = tol * (1.0 + spectral_norm_from(ev));
  const double lo = ev(0);
  const double hi = ev(ev.size() - 1);
  if (lo > thr) return Definiteness::posdef;
  if (lo >= -thr) return Definiteness::psd;
  if (hi < -thr) return Definiteness::negdef;
  if (hi <= thr) return Definiteness::nsd;
  return Definiteness::indef;
}

bool is_posdef(const Matrix& M, double tol) {
  return definiteness(M, tol) == Definiteness::posdef;
}

bool is_psd(const Matrix& M, double tol) {
  const auto d = definiteness(M, tol);
  return d == Definiteness::posdef || d == Definiteness::psd;
}

bool is_negdef(const Matrix& M, double tol) {
  if (M.size() == 0) return true;
  return definiteness(-M, tol) == Definiteness::posdef;
}

double min_eigenvalue(const Matrix& M) {
  require_square(M, "min_eigenvalue");
  const Vector ev = sym_eigenvalues(M);
  return ev.size() ? ev(0) : 0.0;
}

double max_eigenvalue(const Matrix& M) {
  require_square(M, "max_eigenvalue");
  const Vector ev = sym_eigenvalues(M);
  return ev.size() ? ev(ev.size() - 1) : 0.0;
}

PsdFactor psd_factor(const Matrix& M, double tol) {
  require_square(M, "psd_factor");
  PsdFactor out;
  if (M.size() == 0) {
    out.U.resize(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  if (es.info() != Eigen::Success) throw NumericalError("psd_factor: eigen solver failed");
  const Vector& ev = es.eigenvalues();
  const double thr = tol * (1.0 + spectral_norm_from(ev));
  if (ev(0) < -thr) {
    std::ostringstream os;
    os << "psd_factor: matrix is indefinite, negative eigenvalues:";
    for (Eigen::Index i = 0; i < ev.size() && ev(i) < -thr; ++i) os << ' ' << ev(i);
    throw NumericalError(os.str());
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i)
    if (ev(i) > thr) keep.push_back(i);
  out.U.resize(M.rows(), static_cast<Eigen::Index>(keep.size()));
  out.D.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    Vector u = es.eigenvectors().col(keep[k]);
    // Sign convention: first entry of non-negligible magnitude is positive.
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      if (std::abs(u(i)) > 1e-12) {
        if (u(i) < 0) u = -u;
        break;
      }
    }
    out.U.col(static_cast<Eigen::Index>(k)) = u;
    out.D(static_cast<Eigen::Index>(k)) = ev(keep[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::Index VariableSpec::slots() const {
  switch (kind) {
    case VarKind::scalar: return 1;
    case VarKind::symmetric: return rows * (rows + 1) / 2;
    case VarKind::full: return rows * cols;
  }
  return 0;
}

Matrix AffineLmi::evaluate(const Vector& x) const {
  Matrix out = constant;
  for (const auto& [s, c] : coeffs) out.noalias() += x(s) * c;
  return out;
}

AffineLmi linearize(std::string name, Eigen::Index slots,
                    const std::function<Matrix(const Vector&, double)>& eval) {
  AffineLmi lmi;
  lmi.name = std::move(name);
  Vector x = Vector::Zero(slots);
  lmi.constant = eval(x, 1.0);
  for (Eigen::Index s = 0; s < slots; ++s) {
    x.setZero();
    x(s) = 1.0;
    Matrix c = eval(x, 0.0);
    if (c.cwiseAbs().maxCoeff() > 0.0) lmi.coeffs.emplace_back(s, std::move(c));
  }
  return lmi;
}

Eigen::Index SdpProblem::add_variable(const std::string& id, VarKind kind, Eigen::Index rows,
                                      Eigen::Index cols) {
  if (has_variable(id)) throw PreconditionError("SdpProblem: duplicate variable '" + id + "'");
  VariableSpec v;
  v.id = id;
  v.kind = kind;
  v.rows = kind == VarKind::scalar ? 1 : rows;
  v.cols = kind == VarKind::scalar ? 1 : (kind == VarKind::symmetric ? rows : cols);
  v.offset = slots_;
  slots_ += v.slots();
  vars_.push_back(v);
  return v.offset;
}

void SdpProblem::add_constraint(AffineLmi lmi) { lmis_.push_back(std::move(lmi)); }

void SdpProblem::set_objective(Vector c) { objective_ = std::move(c); }

void SdpProblem::minimize(const std::string& id, double weight) {
  const auto& v = variable(id);
  if (v.kind != VarKind::scalar)
    throw PreconditionError("SdpProblem::minimize: '" + id + "' is not a scalar");
  Vector c = Vector::Zero(slots_);
  c(v.offset) = weight;
  objective_ = c;
}

bool SdpProblem::has_variable(const std::string& id) const {
  return std::any_of(vars_.begin(), vars_.end(), [&](const auto& v) { return v.id == id; });
}

const VariableSpec& SdpProblem::variable(const std::string& id) const {
  for (const auto& v : vars_)
    if (v.id == id) return v;
  throw PreconditionError("SdpProblem: unknown variable '" + id + "'");
}

Eigen::Index SdpProblem::slot(const std::string& id, Eigen::Index i, Eigen::Index j) const {
  const auto& v = variable(id);
  if (i < 0 || j < 0 || i >= v.rows || j >= v.cols)
    throw DimensionError("SdpProblem::slot: index out of range for '" + id + "'");
  switch (v.kind) {
    case VarKind::scalar: return v.offset;
    case VarKind::symmetric: {
      if (i > j) std::swap(i, j);
      // row-major upper triangle: rows before i contribute (n - r) entries
      return v.offset + i * v.rows - i * (i - 1) / 2 + (j - i);
    }
    case VarKind::full: return v.offset + i * v.cols + j;
  }
  return v.offset;
}

Matrix SdpProblem::unpack(const std::string& id, const Vector& x) const {
  const auto& v = variable(id);
  Matrix out(v.rows, v.cols);
  for (Eigen::Index i = 0; i < v.rows; ++i)
    for (Eigen::Index j = 0; j < v.cols; ++j) out(i, j) = x(slot(id, i, j));
  return out;
}

void SdpProblem::pack(const std::string& id, const Matrix& value, Vector& x) const {
  const auto& v = variable(id);
  require_shape(value, v.rows, v.cols, "SdpProblem::pack(" + id + ")");
  if (x.size() != slots_) x.conservativeResize(slots_);
  for (Eigen::Index i = 0; i < v.rows; ++i)
    for (Eigen::Index j = (v.kind == VarKind::symmetric ? i : 0); j < v.cols; ++j)
      x(slot(id, i, j)) = value(i, j);
}

void SdpProblem::validate() const {
  if (lmis_.empty()) throw PreconditionError("SdpProblem: no constraints");
  if (objective_ && objective_->size() != slots_)
    throw DimensionError("SdpProblem: objective length does not match slot count");
  for (const auto& lmi : lmis_) {
    const auto d = lmi.constant.rows();
    require_shape(lmi.constant, d, d, "LMI '" + lmi.name + "' constant");
    if (!(lmi.constant - lmi.constant.transpose()).isZero(0.0))
      throw PreconditionError("LMI '" + lmi.name + "': constant not symmetric");
    std::set<Eigen::Index> seen;
    for (const auto& [s, c] : lmi.coeffs) {
      if (s < 0 || s >= slots_)
        throw PreconditionError("LMI '" + lmi.name + "': undeclared slot " + std::to_string(s));
      if (!seen.insert(s).second)
        throw PreconditionError("LMI '" + lmi.name + "': slot repeated " + std::to_string(s));
      require_shape(c, d, d, "LMI '" + lmi.name + "' coefficient");
      if (!(c - c.transpose()).isZero(0.0))
        throw PreconditionError("LMI '" + lmi.name + "': coefficient not symmetric");
    }
  }
}

double worst_slack(const SdpProblem& problem, const Vector& x) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& lmi : problem.constraints())
    worst = std::min(worst, min_eigenvalue(lmi.evaluate(x)));
  return worst;
}

double relative_worst_slack(const SdpProblem& problem, const Vector& x) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& lmi : problem.constraints()) {
    double scale = std::max(1.0, lmi.constant.cwiseAbs().maxCoeff());
    for (const auto& [s, cf] : lmi.coeffs) scale = std::max(scale, cf.cwiseAbs().maxCoeff());
    worst = std::min(worst, min_eigenvalue(lmi.evaluate(x)) / scale);
  }
  return worst;
}

SdpSolution solve_sdp(const SdpProblem& problem, const SdpOptions& options,
                      const SdpBackend& backend) {
  problem.validate();
  SdpSolution sol = backend.solve(problem, options);
  if (sol.x.size() != problem.num_slots()) {
    if (sol.status == SdpStatus::optimal) {
      sol.status = SdpStatus::error;
      sol.message = "backend returned a point of the wrong size";
    }
    return sol;
  }
  if (!sol.x.allFinite()) {
    sol.status = SdpStatus::error;
    sol.message = "backend returned non-finite values";
    return sol;
  }
  for (const auto& v : problem.variables()) sol.values[v.id] = problem.unpack(v.id, sol.x);
  sol.min_slack = worst_slack(problem, sol.x);
  sol.objective = problem.objective() ? problem.objective()->dot(sol.x) : 0.0;
  const double rel = relative_worst_slack(problem, sol.x);
  if (sol.status == SdpStatus::optimal && rel < -options.feas_tol) {
    sol.status = SdpStatus::inaccurate;
    sol.message = "re-check failed: worst relative eigenvalue " + std::to_string(rel);
  }
  return sol;
}

}  // namespace dissipasynth
