#include "dissipasynth/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace dissipasynth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

SupplyRate supply_factor(const Matrix& Q, const Matrix& S, const Matrix& R, double tol) {
  const auto p = Q.rows();
  const auto q = R.rows();
  require_shape(Q, p, p, "Q");
  require_shape(R, q, q, "R");
  require_shape(S, p, q, "S");
  require_finite(Q, "Q");
  require_finite(S, "S");
  require_finite(R, "R");
  if (Q != Q.transpose()) throw PreconditionError("Q must be symmetric");
  if (R != R.transpose()) throw PreconditionError("R must be symmetric");
  PsdFactor f;
  try {
    f = psd_factor(R, tol);
  } catch (const NumericalError&) {
    throw PreconditionError("Problem 1 requires R ⪰ 0");
  }
  SupplyRate s;
  s.Q = Q;
  s.S = S;
  s.R = R;
  s.T = f.U;
  s.Rtilde = f.D;
  return s;
}

SupplyRate hinf_supply(double gamma, Eigen::Index p, Eigen::Index q) {
  if (!(gamma > 0.0)) throw PreconditionError("gamma must be positive");
  return supply_factor(-gamma * gamma * Matrix::Identity(p, p), Matrix::Zero(p, q),
                       Matrix::Identity(q, q));
}

void SynthesisIngredients::validate() const {
  if (!cs.has_nominal || !cs.has_factor)
    throw PreconditionError("synthesis needs a complete consistency set");
  const auto nn = n(), mm = m(), pp = p(), qq = q(), ll = l();
  require_shape(B1, nn, pp, "B1");
  require_shape(C1, qq, nn, "C1");
  require_shape(D1, qq, pp, "D1");
  require_shape(E, qq, mm, "E");
  require_shape(C, ll, nn, "C");
  require_shape(F, ll, pp, "F");
  require_shape(supply.Q, pp, pp, "Q");
  require_shape(supply.S, pp, qq, "S");
  require_shape(supply.R, qq, qq, "R");
  require_shape(supply.T, qq, supply.qtilde(), "T");
  require_shape(cs.Xi, nn, cs.ntilde(), "Xi");
}

SynthesisIngredients SynthesisIngredients::from_plant(ConsistencySet cs, SupplyRate supply,
                                                      const Plant& plant) {
  SynthesisIngredients ing;
  ing.cs = std::move(cs);
  ing.supply = std::move(supply);
  ing.B1 = plant.B1;
  ing.C1 = plant.C1;
  ing.D1 = plant.D1;
  ing.E = plant.E;
  ing.C = plant.C;
  ing.F = plant.F;
  ing.validate();
  return ing;
}

Plant SynthesisIngredients::plant(const Matrix& A, const Matrix& B) const {
  Plant pl;
  pl.A = A;
  pl.B = B;
  pl.B1 = B1;
  pl.C1 = C1;
  pl.D1 = D1;
  pl.E = E;
  pl.C = C;
  pl.F = F;
  return pl;
}

PiLayout PiLayout::make(Eigen::Index n, Eigen::Index p, Eigen::Index qtilde, Eigen::Index m,
                        Eigen::Index ntilde) {
  if (n < 1 || p < 1 || m < 1 || qtilde < 0 || ntilde < 0)
    throw DimensionError("PiLayout: invalid block sizes");
  PiLayout L;
  L.size = {n, n, p, qtilde, n, n, n, m, ntilde};
  Eigen::Index off = 0;
  for (int b = 0; b < kBlocks; ++b) {
    L.offset[static_cast<std::size_t>(b)] = off;
    off += L.size[static_cast<std::size_t>(b)];
  }
  L.dim = off;
  return L;
}

const char* PiLayout::block_name(int b) {
  static const char* names[kBlocks] = {"X", "Y", "w", "z", "Y'", "X'", "A", "B", "Xi"};
  return (b >= 0 && b < kBlocks) ? names[b] : "?";
}

namespace {

struct PiTerms {
  Matrix X, Y, Atc, Btc, Ctc, Dc;
  double g = 0.0;     // used when replace_q
  bool replace_q = false;
};

class PiBuilder {
 public:
  PiBuilder(const SynthesisIngredients& ing, double alpha)
      : ing_(ing), alpha_(alpha),
        L_(PiLayout::make(ing.n(), ing.p(), ing.supply.qtilde(), ing.m(), ing.cs.ntilde())) {
    const auto& cs = ing.cs;
    G12_ = cs.phi12() + cs.As * cs.phi22() + cs.Bs * cs.phi23().transpose();
    G13_ = cs.phi13() + cs.As * cs.phi23() + cs.Bs * cs.phi33();
    Xis_ = cs.Xi * cs.Lambda.cwiseSqrt().asDiagonal();
    TsT_ = ing.supply.Rtilde.cwiseSqrt().asDiagonal() * ing.supply.T.transpose();
  }

  const PiLayout& layout() const { return L_; }

  // Pi with every decision-independent term multiplied by w.
  Matrix build(const PiTerms& v, double w) const {
    const auto& cs = ing_.cs;
    const auto n = ing_.n();
    const auto p = ing_.p();
    const Matrix In = Matrix::Identity(n, n);
    out_ = Matrix::Zero(L_.dim, L_.dim);

    const Matrix C1cl = w * ing_.C1 + ing_.E * v.Dc * ing_.C;
    const Matrix C1Y = ing_.C1 * v.Y + ing_.E * v.Ctc;
    const Matrix Dcl = w * ing_.D1 + ing_.E * v.Dc * ing_.F;
    const Matrix& S = ing_.supply.S;

    put(0, 0, v.X);
    put(1, 0, w * In);
    put(1, 1, v.Y);
    put(2, 0, -S * C1cl);
    put(2, 1, -S * C1Y);
    const Matrix SD = S * Dcl;
    const Matrix negQ =
        v.replace_q ? Matrix(v.g * Matrix::Identity(p, p)) : Matrix(-w * ing_.supply.Q);
    put(2, 2, negQ - SD - SD.transpose());
    put(3, 0, TsT_ * C1cl);
    put(3, 1, TsT_ * C1Y);
    put(3, 2, TsT_ * Dcl);
    put(3, 3, w * Matrix::Identity(L_.size[3], L_.size[3]));

    put(4, 0, w * cs.As + cs.Bs * v.Dc * ing_.C);
    put(4, 1, cs.As * v.Y + cs.Bs * v.Ctc);
    put(4, 2, w * ing_.B1 + cs.Bs * v.Dc * ing_.F);
    put(5, 0, v.X * cs.As + v.Btc * ing_.C);
    put(5, 1, v.Atc);
    put(5, 2, v.X * ing_.B1 + v.Btc * ing_.F);
    put(6, 0, w * In);
    put(6, 1, v.Y);
    put(7, 0, v.Dc * ing_.C);
    put(7, 1, v.Ctc);
    put(7, 2, v.Dc * ing_.F);

    put(4, 4, v.Y);
    put(5, 4, w * In);
    put(5, 5, v.X);
    put(6, 4, (-alpha_ * w * G12_).transpose());
    put(7, 4, (-alpha_ * w * G13_).transpose());
    put(8, 4, (alpha_ * w * Xis_).transpose());
    put(6, 5, (-alpha_ * v.X * G12_).transpose());
    put(7, 5, (-alpha_ * v.X * G13_).transpose());
    put(8, 5, (alpha_ * v.X * Xis_).transpose());
    put(6, 6, -alpha_ * w * Matrix(cs.phi22()));
    put(7, 6, (-alpha_ * w * Matrix(cs.phi23())).transpose());
    put(7, 7, -alpha_ * w * Matrix(cs.phi33()));
    put(8, 8, alpha_ * w * Matrix::Identity(L_.size[8], L_.size[8]));
    return out_;
  }

 private:
  // Block (i, j) with i >= j; mirrors into (j, i).
  void put(int i, int j, const Matrix& M) const {
    const auto ri = L_.offset[static_cast<std::size_t>(i)];
    const auto cj = L_.offset[static_cast<std::size_t>(j)];
    const auto si = L_.size[static_cast<std::size_t>(i)];
    const auto sj = L_.size[static_cast<std::size_t>(j)];
    if (si == 0 || sj == 0) return;
    if (M.rows() != si || M.cols() != sj) {
      std::ostringstream os;
      os << "Pi block (" << PiLayout::block_name(i) << ", " << PiLayout::block_name(j)
         << "): expected " << si << "x" << sj << ", got " << M.rows() << "x" << M.cols();
      throw DimensionError(os.str());
    }
    if (i == j) {
      out_.block(ri, cj, si, sj) = sym(M);
    } else {
      out_.block(ri, cj, si, sj) = M;
      out_.block(cj, ri, sj, si) = M.transpose();
    }
  }

  const SynthesisIngredients& ing_;
  double alpha_;
  PiLayout L_;
  Matrix G12_, G13_, Xis_, TsT_;
  mutable Matrix out_;
};

void declare_vars(SdpProblem& prob, const SynthesisIngredients& ing) {
  const auto n = ing.n(), m = ing.m(), l = ing.l();
  prob.add_variable("X", VarKind::symmetric, n, n);
  prob.add_variable("Y", VarKind::symmetric, n, n);
  prob.add_variable("Atc", VarKind::full, n, n);
  prob.add_variable("Btc", VarKind::full, n, l);
  prob.add_variable("Ctc", VarKind::full, m, n);
  prob.add_variable("Dc", VarKind::full, m, l);
}

PiTerms unpack_terms(const SdpProblem& prob, const Vector& x) {
  PiTerms t;
  t.X = prob.unpack("X", x);
  t.Y = prob.unpack("Y", x);
  t.Atc = prob.unpack("Atc", x);
  t.Btc = prob.unpack("Btc", x);
  t.Ctc = prob.unpack("Ctc", x);
  t.Dc = prob.unpack("Dc", x);
  return t;
}

// Pi with Q fixed (g unset) or Q := -g I, and an optional slack variable t.
SdpProblem make_problem(const SynthesisIngredients& ing, double alpha, bool with_g,
                        std::optional<double> fixed_g, bool with_t, double margin_rel,
                        double var_bound, double storage_bound = 0.0, double margin_abs = 0.0) {
  SdpProblem prob;
  declare_vars(prob, ing);
  if (with_g) prob.add_variable("g");
  if (with_t) prob.add_variable("t");
  const PiBuilder builder(ing, alpha);
  const Eigen::Index dim = builder.layout().dim;
  auto eval = [&](const Vector& x, double w) {
    PiTerms terms = unpack_terms(prob, x);
    if (with_g) {
      terms.replace_q = true;
      terms.g = x(prob.slot("g"));
    } else if (fixed_g) {
      terms.replace_q = true;
      terms.g = w * *fixed_g;
    }
    Matrix pi = builder.build(terms, w);
    if (with_t) pi.diagonal().array() -= x(prob.slot("t"));
    return pi;
  };
  AffineLmi lmi = linearize("Pi", prob.num_slots(), eval);
  if (margin_rel > 0.0) {
    const double margin = margin_rel * (1.0 + lmi.constant.operatorNorm());
    lmi.constant.diagonal().array() -= margin;
  }
  if (margin_abs > 0.0) lmi.constant.diagonal().array() -= margin_abs;
  (void)dim;
  prob.add_constraint(std::move(lmi));
  if (var_bound > 0.0) {
    // |x_i| <= var_bound for the controller variables keeps the optimum attained.
    const Eigen::Index nv = prob.variable("Dc").offset + prob.variable("Dc").slots();
    AffineLmi box;
    box.name = "bound";
    box.constant = var_bound * Matrix::Identity(2 * nv, 2 * nv);
    for (Eigen::Index i = 0; i < nv; ++i) {
      Matrix c = Matrix::Zero(2 * nv, 2 * nv);
      c(2 * i, 2 * i) = -1.0;
      c(2 * i + 1, 2 * i + 1) = 1.0;
      box.coeffs.emplace_back(i, std::move(c));
    }
    prob.add_constraint(std::move(box));
  }
  if (storage_bound > 0.0) {
    // X ⪯ b I and Y ⪯ b I. Without it the optimum of singular problems is
    // only approached as X or Y grows without bound.
    const auto n = ing.n();
    prob.add_constraint(linearize("storage", prob.num_slots(), [&](const Vector& x, double w) {
      Matrix m = Matrix::Zero(2 * n, 2 * n);
      m.topLeftCorner(n, n) = w * storage_bound * Matrix::Identity(n, n) - prob.unpack("X", x);
      m.bottomRightCorner(n, n) = w * storage_bound * Matrix::Identity(n, n) - prob.unpack("Y", x);
      return m;
    }));
  }
  if (with_g) prob.minimize("g");
  if (with_t) prob.minimize("t", -1.0);
  return prob;
}

DecisionVars extract(const SdpProblem& prob, const Vector& x, double alpha) {
  DecisionVars v;
  v.X = prob.unpack("X", x);
  v.Y = prob.unpack("Y", x);
  v.Atc = prob.unpack("Atc", x);
  v.Btc = prob.unpack("Btc", x);
  v.Ctc = prob.unpack("Ctc", x);
  v.Dc = prob.unpack("Dc", x);
  v.alpha = alpha;
  return v;
}

SdpSolution solve_with_retry(const SdpProblem& prob, const SynthesisOptions& options,
                             const SdpBackend& backend) {
  SdpSolution sol = solve_sdp(prob, options.sdp, backend);
  if (sol.status == SdpStatus::inaccurate) {
    SdpOptions tight = options.sdp;
    tight.gap_tol *= 0.1;
    tight.max_iter *= 2;
    sol = solve_sdp(prob, tight, backend);
  }
  return sol;
}

constexpr double kTracePenalty = 1e-6;

// Maximizes the slack of Pi ⪰ t I with Q fixed, or Q := -g I for fixed g.
FixedAlphaResult max_slack(const SynthesisIngredients& ing, double alpha,
                           std::optional<double> fixed_g, const SynthesisOptions& options,
                           const SdpBackend& backend) {
  FixedAlphaResult res;
  SdpProblem prob = make_problem(ing, alpha, false, fixed_g, true, 0.0, options.var_bound,
                                 options.storage_bound);
  // The optimal face is often unbounded in X and Y; a small trace penalty
  // keeps the iterates from drifting along it.
  Vector c = *prob.objective();
  for (Eigen::Index i = 0; i < ing.n(); ++i) {
    c(prob.slot("X", i, i)) = kTracePenalty;
    c(prob.slot("Y", i, i)) = kTracePenalty;
  }
  prob.set_objective(std::move(c));
  const SdpSolution sol = solve_with_retry(prob, options, backend);
  if (sol.status == SdpStatus::infeasible) {
    res.status = AlphaStatus::infeasible;
    res.message = sol.message;
    return res;
  }
  if (sol.x.size() != prob.num_slots()) {
    res.status = AlphaStatus::inaccurate;
    res.message = sol.message;
    return res;
  }
  DecisionVars v = extract(prob, sol.x, alpha);
  const double slack = min_eigenvalue(evaluate_pi(ing, v, fixed_g));
  res.slack = slack;
  if (slack > options.accept_slack) {
    res.status = AlphaStatus::feasible;
    res.vars = std::move(v);
    return res;
  }
  // An optimal t at or below zero certifies that no strictly feasible point exists.
  res.status = sol.status == SdpStatus::optimal ? AlphaStatus::infeasible : AlphaStatus::inaccurate;
  std::ostringstream os;
  os << "best slack " << slack;
  if (!sol.message.empty()) os << "; " << sol.message;
  res.message = os.str();
  return res;
}

// Among points keeping half of the attained slack, the one with the smallest
// trace(X) + trace(Y). Max-slack optima can drift along unbounded directions,
// which leaves I - XY nearly singular and the controller badly scaled.
std::optional<DecisionVars> compact_solution(const SynthesisIngredients& ing, double alpha,
                                             std::optional<double> fixed_g, double slack,
                                             const SynthesisOptions& options,
                                             const SdpBackend& backend) {
  SdpProblem prob = make_problem(ing, alpha, false, fixed_g, false, 0.0, options.var_bound,
                                 options.storage_bound, 0.5 * slack);
  Vector c = Vector::Zero(prob.num_slots());
  for (Eigen::Index i = 0; i < ing.n(); ++i) {
    c(prob.slot("X", i, i)) = 1.0;
    c(prob.slot("Y", i, i)) = 1.0;
  }
  prob.set_objective(std::move(c));
  const SdpSolution sol = solve_with_retry(prob, options, backend);
  // Optimality is not needed here, only a strictly feasible point, which is
  // re-checked on Pi below.
  if (sol.status == SdpStatus::infeasible || sol.x.size() != prob.num_slots()) return std::nullopt;
  DecisionVars v = extract(prob, sol.x, alpha);
  if (!(min_eigenvalue(evaluate_pi(ing, v, fixed_g)) > options.accept_slack)) return std::nullopt;
  return v;
}

}  // namespace

SdpProblem assemble_pi(const SynthesisIngredients& ing, double alpha, Objective objective,
                       double var_bound) {
  ing.validate();
  if (!(alpha > 0.0)) throw PreconditionError("alpha must be positive");
  if (objective == Objective::feasibility)
    return make_problem(ing, alpha, false, {}, true, 0.0, var_bound);
  return make_problem(ing, alpha, true, {}, false, 1e-6, var_bound);
}

Matrix evaluate_pi(const SynthesisIngredients& ing, const DecisionVars& v, std::optional<double> g) {
  const PiBuilder builder(ing, v.alpha);
  PiTerms t{v.X, v.Y, v.Atc, v.Btc, v.Ctc, v.Dc, g.value_or(0.0), g.has_value()};
  return builder.build(t, 1.0);
}

const char* to_string(AlphaStatus s) {
  switch (s) {
    case AlphaStatus::feasible: return "feasible";
    case AlphaStatus::infeasible: return "infeasible";
    case AlphaStatus::inaccurate: return "inaccurate";
  }
  return "?";
}

FixedAlphaResult solve_fixed_alpha(const SynthesisIngredients& ing, double alpha,
                                   Objective objective, const SynthesisOptions& options,
                                   const SdpBackend& backend) {
  ing.validate();
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw PreconditionError("alpha must be positive");
  if (objective == Objective::feasibility) return max_slack(ing, alpha, {}, options, backend);

  const SdpProblem prob =
      make_problem(ing, alpha, true, {}, false, 1e-6, options.var_bound, options.storage_bound);
  const SdpSolution sol = solve_with_retry(prob, options, backend);
  FixedAlphaResult res;
  // A stalled dual residual still leaves a usable primal point: g only seeds
  // the backed-off slack solve, whose result is re-checked directly.
  const bool usable = sol.status == SdpStatus::optimal ||
                      (sol.status == SdpStatus::inaccurate && sol.x.size() == prob.num_slots() &&
                       worst_slack(prob, sol.x) >= 0.0);
  if (!usable) {
    res.status = sol.status == SdpStatus::infeasible ? AlphaStatus::infeasible
                                                     : AlphaStatus::inaccurate;
    res.message = std::string("gamma solve: ") + to_string(sol.status) +
                  (sol.message.empty() ? "" : ": " + sol.message);
    return res;
  }
  const double gstar = std::max(sol.x(prob.slot("g")), 0.0);
  // Back off from the boundary so the controller is reconstructed from a
  // point with a clear strictness margin.
  double eta = options.gamma_backoff;
  for (int attempt = 0; attempt < 3; ++attempt, eta *= 10.0) {
    const double gb = gstar * (1.0 + eta) + eta * options.accept_slack;
    res = max_slack(ing, alpha, gb, options, backend);
    if (res.status == AlphaStatus::feasible) {
      res.gamma = std::sqrt(gb);
      return res;
    }
  }
  res.status = AlphaStatus::inaccurate;
  return res;
}

AlphaStrategy AlphaStrategy::grid(double lo, double hi, int steps) {
  AlphaStrategy s;
  s.kind = Kind::grid;
  s.lo = lo;
  s.hi = hi;
  s.steps = steps;
  return s;
}

AlphaStrategy AlphaStrategy::golden(double lo, double hi, int iters) {
  AlphaStrategy s;
  s.kind = Kind::golden;
  s.lo = lo;
  s.hi = hi;
  s.iters = iters;
  return s;
}

SynthesisInfeasible::SynthesisInfeasible(std::vector<TracePoint> trace)
    : std::runtime_error("synthesis infeasible over searched range"), trace_(std::move(trace)) {}

namespace {

class AlphaEvaluator {
 public:
  AlphaEvaluator(const SynthesisIngredients& ing, Objective obj, const SynthesisOptions& opt)
      : ing_(ing), obj_(obj), opt_(opt) {}

  // Higher is better; -inf when not feasible.
  double score(const FixedAlphaResult& r) const {
    if (r.status != AlphaStatus::feasible) return -std::numeric_limits<double>::infinity();
    return obj_ == Objective::minimize_gamma_sq ? -*r.gamma : r.slack;
  }

  double value(const FixedAlphaResult& r) const {
    if (r.status != AlphaStatus::feasible) return kNaN;
    return obj_ == Objective::minimize_gamma_sq ? *r.gamma : r.slack;
  }

  void run_batch(const std::vector<double>& alphas, Exec exec) {
    std::vector<FixedAlphaResult> out(alphas.size());
    const int count = static_cast<int>(alphas.size());
    auto one = [&](int i) {
      try {
        out[static_cast<std::size_t>(i)] = solve_fixed_alpha(ing_, alphas[i], obj_, opt_);
      } catch (const NumericalError& e) {
        out[static_cast<std::size_t>(i)].status = AlphaStatus::inaccurate;
        out[static_cast<std::size_t>(i)].message = e.what();
      }
    };
    if (exec == Exec::serial) {
      for (int i = 0; i < count; ++i) one(i);
    } else {
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < count; ++i) one(i);
    }
    for (std::size_t i = 0; i < alphas.size(); ++i) results_.emplace(alphas[i], std::move(out[i]));
  }

  double eval(double alpha) {
    auto it = results_.find(alpha);
    if (it == results_.end()) {
      run_batch({alpha}, Exec::serial);
      it = results_.find(alpha);
    }
    return score(it->second);
  }

  const std::map<double, FixedAlphaResult>& results() const { return results_; }

  std::vector<TracePoint> trace() const {
    std::vector<TracePoint> t;
    for (const auto& [a, r] : results_) t.push_back({a, value(r), r.status});
    return t;
  }

 private:
  const SynthesisIngredients& ing_;
  Objective obj_;
  const SynthesisOptions& opt_;
  std::map<double, FixedAlphaResult> results_;
};

std::vector<double> log_grid(double lo, double hi, int steps) {
  std::vector<double> g;
  if (steps == 1) return {lo};
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < steps; ++i) g.push_back(std::exp(a + (b - a) * i / (steps - 1)));
  g.front() = lo;
  g.back() = hi;
  return g;
}

void golden_search(AlphaEvaluator& ev, double lo, double hi, int iters) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo), b = std::log(hi);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = ev.eval(std::exp(c)), fd = ev.eval(std::exp(d));
  for (int i = 0; i < iters; ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = ev.eval(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = ev.eval(std::exp(d));
    }
  }
}

}  // namespace

SynthesisResult search_alpha(const SynthesisIngredients& ing, const AlphaStrategy& strategy,
                             Objective objective, const SynthesisOptions& options, Exec exec,
                             const Matrix& U) {
  ing.validate();
  if (!(strategy.lo > 0.0) || !(strategy.hi >= strategy.lo))
    throw PreconditionError("alpha range must satisfy 0 < lo <= hi");
  if (strategy.kind != AlphaStrategy::Kind::golden && strategy.steps < 1)
    throw PreconditionError("alpha grid needs at least one step");

  AlphaEvaluator ev(ing, objective, options);
  if (strategy.kind == AlphaStrategy::Kind::golden) {
    golden_search(ev, strategy.lo, strategy.hi, strategy.iters);
  } else {
    const std::vector<double> grid = log_grid(strategy.lo, strategy.hi, strategy.steps);
    ev.run_batch(grid, exec);
    if (strategy.kind == AlphaStrategy::Kind::grid_then_golden && grid.size() > 1) {
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double s = ev.score(ev.results().at(grid[i]));
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      if (std::isfinite(best_score)) {
        const double lo = grid[best == 0 ? 0 : best - 1];
        const double hi = grid[std::min(best + 1, grid.size() - 1)];
        golden_search(ev, lo, hi, strategy.iters);
      }
    }
  }

  const FixedAlphaResult* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [a, r] : ev.results()) {
    const double s = ev.score(r);
    if (s > best_score) {
      best_score = s;
      best = &r;
    }
  }
  if (!best) throw SynthesisInfeasible(ev.trace());

  SynthesisResult out;
  out.vars = *best->vars;
  out.gamma = best->gamma;
  out.slack = best->slack;
  const std::optional<double> g =
      best->gamma ? std::optional<double>(*best->gamma * *best->gamma) : std::nullopt;
  if (auto v = compact_solution(ing, out.vars.alpha, g, out.slack, options, default_backend())) {
    out.vars = std::move(*v);
    out.slack = min_eigenvalue(evaluate_pi(ing, out.vars, g));
  }
  out.U = U.size() ? U : Matrix(Matrix::Identity(ing.n(), ing.n()));
  out.controller = reconstruct(out.vars, ing.cs, ing.C, out.U);
  out.trace = ev.trace();
  return out;
}

SynthesisResult min_gamma(const SynthesisIngredients& ing, const AlphaStrategy& strategy,
                          const SynthesisOptions& options, Exec exec, const Matrix& U) {
  return search_alpha(ing, strategy, Objective::minimize_gamma_sq, options, exec, U);
}

Controller reconstruct(const DecisionVars& v, const ConsistencySet& cs, const Matrix& C,
                       const Matrix& U_in, double cond_limit) {
  const auto n = cs.n;
  const auto m = cs.m;
  const auto l = C.rows();
  require_shape(v.X, n, n, "X");
  require_shape(v.Y, n, n, "Y");
  require_shape(v.Atc, n, n, "Atc");
  require_shape(v.Btc, n, l, "Btc");
  require_shape(v.Ctc, m, n, "Ctc");
  require_shape(v.Dc, m, l, "Dc");
  require_shape(C, l, n, "C");
  if (!cs.has_nominal) throw PreconditionError("reconstruct: consistency set has no nominal system");
  const Matrix U = U_in.size() ? U_in : Matrix(Matrix::Identity(n, n));
  require_shape(U, n, n, "U");

  double cond = 0.0;
  if (!is_regular(U, &cond)) {
    std::ostringstream os;
    os << "reconstruct: U is numerically singular (condition " << cond << ")";
    throw NumericalError(os.str());
  }
  const Matrix IXY = Matrix::Identity(n, n) - v.X * v.Y;
  is_regular(IXY, &cond);
  if (!(cond <= cond_limit)) {
    std::ostringstream os;
    os << "reconstruct: I - XY is near singular (condition " << cond
       << "); increase the strictness margin";
    throw NumericalError(os.str());
  }
  const auto Ulu = U.partialPivLu();
  const Matrix Vt = Ulu.solve(IXY);
  // Right division by V^T via the transposed system.
  const auto Vlu = Vt.transpose().fullPivLu();
  auto right_div = [&](const Matrix& M) { return Matrix(Vlu.solve(M.transpose()).transpose()); };
  Controller k;
  k.Dc = v.Dc;
  k.Bc = Ulu.solve(v.Btc - v.X * cs.Bs * v.Dc);
  k.Cc = right_div(v.Ctc - v.Dc * C * v.Y);
  k.Ac = right_div(Ulu.solve(v.Atc - v.X * (cs.As * v.Y + cs.Bs * v.Ctc) - U * k.Bc * C * v.Y));
  return k;
}

}  // namespace dissipasynth
