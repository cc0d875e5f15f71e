// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dissipasynth/analysis.hpp"
#include "dissipasynth/data.hpp"
#include "dissipasynth/experiment.hpp"
#include "dissipasynth/synthesis.hpp"

namespace ds = dissipasynth;
namespace fs = std::filesystem;
using ds::Matrix;
using ds::Vector;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Largest singular value of C (z I - A)^{-1} B + D at z = e^{i theta}.
double sigma_max(const ds::StateSpace& s, double theta) {
  using Cx = Eigen::MatrixXcd;
  const auto n = s.A.rows();
  const std::complex<double> z = std::polar(1.0, theta);
  const Cx M = z * Cx::Identity(n, n) - s.A.cast<std::complex<double>>();
  const Cx G = s.C.cast<std::complex<double>>() * M.partialPivLu().solve(s.B.cast<std::complex<double>>()) +
               s.D.cast<std::complex<double>>();
  return Eigen::JacobiSVD<Cx>(G).singularValues()(0);
}

// Dense sweep followed by golden refinement around the best grid point.
double hinf_norm_oracle(const ds::StateSpace& s) {
  const int grid = 4096;
  const double pi = std::acos(-1.0);
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i <= grid; ++i) {
    const double v = sigma_max(s, pi * i / grid);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = pi * std::max(0, best - 1) / grid, b = pi * std::min(grid, best + 1) / grid;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int k = 0; k < 80; ++k) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (sigma_max(s, c) >= sigma_max(s, d)) b = d; else a = c;
  }
  return std::max(best_val, sigma_max(s, 0.5 * (a + b)));
}

ds::Plant scalar_plant(double C = 1.0) {
  ds::Plant p;
  p.A = scalar(0.5);
  p.B = scalar(1.0);
  p.B1 = scalar(1.0);
  p.C1 = scalar(1.0);
  p.D1 = scalar(0.0);
  p.E = scalar(0.0);
  p.C = scalar(C);
  p.F = scalar(0.0);
  return p;
}

ds::DataRecord scalar_record() {
  return ds::record(scalar_plant(), {scalar(1.0), scalar(0.0)}, {scalar(0.0), scalar(0.0)}, scalar(0.0));
}

double scalar_min_gamma(double eps, double C) {
  const auto p = scalar_plant(C);
  auto cs = ds::make_consistency_set(scalar_record(), ds::energy_phi(eps, 2, 1), p.B1);
  const auto ing = ds::SynthesisIngredients::from_plant(std::move(cs), ds::hinf_supply(1.0, 1, 1), p);
  return *ds::min_gamma(ing).gamma;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome noise_free_recovery() {
  const auto t0 = Clock::now();
  const auto rec = scalar_record();
  ds::ConsistencySet cs = ds::build_phi_tilde(rec, ds::energy_phi(1e-6, 2, 1), scalar(1.0));
  const auto [As, Bs] = ds::nominal_system(cs);
  const double dt = seconds_since(t0);
  const double ea = std::abs(As(0, 0) - 0.5), eb = std::abs(Bs(0, 0) - 1.0);
  std::ostringstream os;
  os << "As=" << As(0, 0) << " Bs=" << Bs(0, 0) << " time=" << dt << "s";
  return {ea <= 1e-6 && eb <= 1e-6 && dt < 1.0, os.str()};
}

Outcome consistency_geometry() {
  const double eps = 0.1;
  const auto cs = ds::make_consistency_set(scalar_record(), ds::energy_phi(eps, 2, 1), scalar(1.0));
  auto boundary = [&](double sign) {
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      const bool inside = ds::membership(scalar(0.5 + sign * mid), scalar(1.0), cs, 0.0).inside;
      (inside ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double expected = std::sqrt(2.0) * eps;  // margin 2 eps^2 - delta^2
  const double up = boundary(1.0), down = boundary(-1.0);
  std::ostringstream os;
  os << "|delta|=" << up << "," << down << " expected " << expected;
  return {std::abs(up - 0.1414) <= 1e-3 && std::abs(down - 0.1414) <= 1e-3 &&
              std::abs(up - expected) <= 1e-6,
          os.str()};
}

struct RandomCase {
  ds::SynthesisIngredients ing;
  ds::SynthesisResult res;
};

// Random plant with n in {2, 3}, m = p = 1, l < n, recorded with noise that
// fills 90% of the energy bound.
std::optional<ds::SynthesisIngredients> random_ingredients(std::mt19937_64& rng) {
  const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 2);
  const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - 1));
  ds::Plant p;
  p.A = randn(rng, n, n);
  p.A *= uniform(rng, 0.4, 1.05) / ds::spectral_radius(p.A);
  p.B = randn(rng, n, 1);
  p.B1 = 0.5 * randn(rng, n, 1);
  p.C1 = randn(rng, 1, n);
  p.D1 = Matrix::Zero(1, 1);
  p.E = scalar(uniform(rng, 0.05, 0.3));
  p.C = randn(rng, l, n);
  p.F = Matrix::Zero(l, 1);
  const int N = 20;
  const double eps = uniform(rng, 0.005, 0.05);
  std::bernoulli_distribution coin(0.5);
  std::vector<Vector> u, w;
  Matrix W = Matrix::Zero(1, N);
  for (int k = 0; k < N; ++k) W(0, k) = uniform(rng, -eps, eps);
  const double cap = 0.9 * eps * std::sqrt(static_cast<double>(N));
  if (W.norm() > cap) W *= cap / W.norm();
  for (int k = 0; k < N; ++k) {
    u.push_back(Vector::Constant(1, coin(rng) ? 1.0 : -1.0));
    w.push_back(W.col(k));
  }
  const auto rec = ds::record(p, u, w, Vector::Zero(n));
  try {
    auto cs = ds::make_consistency_set(rec, ds::energy_phi(eps, N, 1), p.B1);
    if (!ds::check_assumptions(rec, cs).all()) return std::nullopt;
    return ds::SynthesisIngredients::from_plant(std::move(cs), ds::hinf_supply(1.0, 1, 1), p);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<RandomCase> g_cases;  // shared by criteria 3 and 5

Outcome end_to_end_soundness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int attempted = 0, synthesized = 0, violations = 0;
  std::ostringstream os;
  while (attempted < 20) {
    auto ing = random_ingredients(rng);
    if (!ing) continue;
    ++attempted;
    ds::SynthesisResult res;
    try {
      res = ds::min_gamma(*ing);
    } catch (const ds::SynthesisInfeasible&) {
      continue;
    } catch (const ds::NumericalError&) {
      continue;
    }
    ++synthesized;
    ds::SynthesisIngredients check = *ing;
    check.supply = ds::hinf_supply(*res.gamma, 1, 1);
    const auto rep = ds::worst_case_check(check, res.controller, 50, ds::derive_seed(77, attempted),
                                          ds::Exec::parallel, 1024);
    const bool ok = rep.all_certified && rep.worst_peak_gain <= *res.gamma * (1.0 + 1e-3);
    if (!ok) {
      ++violations;
      os << " [case " << attempted << " gamma=" << *res.gamma << " peak=" << rep.worst_peak_gain
         << " certified=" << rep.all_certified << "]";
    }
    g_cases.push_back({std::move(check), std::move(res)});
  }
  const double dt = seconds_since(t0);
  std::ostringstream head;
  head << "plants=" << attempted << " synthesized=" << synthesized << " violations=" << violations
       << " time=" << dt << "s" << os.str();
  return {violations == 0 && synthesized > 0 && dt < 600.0, head.str()};
}

Outcome analysis_oracle() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 6);
    const Eigen::Index mi = 1 + static_cast<Eigen::Index>(rng() % 2);
    const Eigen::Index po = 1 + static_cast<Eigen::Index>(rng() % 2);
    ds::StateSpace s;
    s.A = randn(rng, n, n);
    s.A *= uniform(rng, 0.2, 0.9) / ds::spectral_radius(s.A);
    s.B = randn(rng, n, mi);
    s.C = randn(rng, po, n);
    s.D = 0.3 * randn(rng, po, mi);
    const double truth = hinf_norm_oracle(s);
    auto certified = [&](double g) {
      const Matrix Q = -g * g * Matrix::Identity(mi, mi);
      return ds::certify_dissipativity(s, Q, Matrix::Zero(mi, po), Matrix::Identity(po, po)).has_value();
    };
    double lo = 0.0, hi = 1.0;
    while (!certified(hi)) {
      lo = hi;
      hi *= 2.0;
    }
    while (hi - lo > 1e-6 * hi) {
      const double mid = 0.5 * (lo + hi);
      (certified(mid) ? hi : lo) = mid;
    }
    worst = std::max(worst, std::abs(hi - truth) / truth);
  }
  std::ostringstream os;
  os << "systems=50 worst relative gap=" << worst;
  return {worst <= 1e-3, os.str()};
}

Outcome realization_invariance() {
  std::mt19937_64 rng(5);
  int controllers = 0;
  double worst = 0.0;
  // Top up with fresh plants when criterion 3 produced fewer than 20.
  std::mt19937_64 extra(4242);
  while (g_cases.size() < 20) {
    auto ing = random_ingredients(extra);
    if (!ing) continue;
    try {
      auto res = ds::min_gamma(*ing);
      g_cases.push_back({std::move(*ing), std::move(res)});
    } catch (const std::exception&) {
    }
  }
  const double pi = std::acos(-1.0);
  for (std::size_t c = 0; c < 20; ++c) {
    const auto& rc = g_cases[c];
    const auto& ing = rc.ing;
    const auto n = ing.n();
    const auto plant = ing.plant(ing.cs.As, ing.cs.Bs);
    const auto ref = ds::close_loop(plant, ds::reconstruct(rc.res.vars, ing.cs, ing.C));
    ++controllers;
    for (int k = 0; k < 5; ++k) {
      Matrix U;
      do {
        U = Matrix::Identity(n, n) + 0.5 * randn(rng, n, n) / std::sqrt(static_cast<double>(n));
      } while (Eigen::JacobiSVD<Matrix>(U).singularValues()(n - 1) < 0.2);
      const auto cl = ds::close_loop(plant, ds::reconstruct(rc.res.vars, ing.cs, ing.C, U));
      for (int i = 0; i <= 256; ++i) {
        const double th = pi * i / 256;
        const double a = sigma_max(ref, th), b = sigma_max(cl, th);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, a));
      }
    }
  }
  std::ostringstream os;
  os << "controllers=" << controllers << " U choices=5 worst pointwise gap=" << worst;
  return {worst <= 1e-7, os.str()};
}

double config_min_gamma(const fs::path& config) {
  const auto cfg = ds::load_config(config);
  const auto rec = ds::generate_record(cfg);
  return *ds::min_gamma(ds::ingredients(cfg, rec), cfg.alpha, cfg.options).gamma;
}

Outcome information_monotonicity() {
  // A scalar state admits only one partial measurement: none (C = 0). Any
  // F != 0 reveals w and would add information instead.
  const double full1 = scalar_min_gamma(1e-6, 1.0);
  const double part1 = scalar_min_gamma(1e-6, 0.0);
  const fs::path dir = DS_CONFIG_DIR;
  const double full2 = config_min_gamma(dir / "plant2_full.json");
  const double part2 = config_min_gamma(dir / "plant2_partial.json");
  std::ostringstream os;
  os << "scalar full=" << full1 << " partial=" << part1 << "; n=2 full=" << full2
     << " partial=" << part2;
  return {full1 <= part1 + 1e-6 && full2 <= part2 + 1e-6, os.str()};
}

Outcome noise_monotonicity() {
  const double epss[] = {1e-4, 1e-2, 1e-1};
  std::vector<double> g;
  std::ostringstream os;
  for (double e : epss) {
    g.push_back(scalar_min_gamma(e, 1.0));
    os << "eps=" << e << " gamma=" << g.back() << " ";
  }
  return {g[0] <= g[1] + 1e-6 && g[1] <= g[2] + 1e-6, os.str()};
}

Outcome s_lemma_sufficiency() {
  std::mt19937_64 rng(8);
  int violations = 0, checked = 0, instances = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::Index N = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Matrix G = randn(rng, N, N);
    const Matrix K22 = -(G * G.transpose() + 0.1 * Matrix::Identity(N, N));
    const Matrix K12 = randn(rng, n, N);
    const Matrix H = randn(rng, n, n);
    const Matrix K11 = K12 * K22.ldlt().solve(K12.transpose()) + H * H.transpose() + 0.05 * Matrix::Identity(n, n);
    Matrix K(n + N, n + N);
    K << K11, K12, K12.transpose(), K22;
    K = 0.5 * (K + K.transpose());
    const double alpha = uniform(rng, 0.1, 5.0);
    const Matrix P = randn(rng, n + N, n + N);
    Matrix M = alpha * K + P * P.transpose() + 0.01 * Matrix::Identity(n + N, n + N);
    M = 0.5 * (M + M.transpose());
    const auto r = ds::s_lemma_check(M, K, n, alpha, 1000, ds::derive_seed(31, trial));
    if (!r.reduction_holds) continue;
    ++instances;
    checked += r.checked;
    if (r.counterexample) ++violations;
  }
  std::ostringstream os;
  os << "instances=" << instances << " samples=" << checked << " violations=" << violations;
  return {instances == 100 && checked == 100 * 1000 && violations == 0, os.str()};
}

Outcome dimension_check() {
  std::mt19937_64 rng(13);
  int cases = 0, mismatches = 0, zero_qt = 0, zero_nt = 0;
  auto pick = [&](int lo, int hi) { return static_cast<Eigen::Index>(lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1))); };
  while (cases < 200) {
    const auto n = pick(1, 4), m = pick(1, 3), p = pick(1, 3), q = pick(1, 3), l = pick(1, 3);
    const auto rb = pick(0, static_cast<int>(std::min(n, p)));  // rank of B1 = ntilde
    const auto rr = pick(0, static_cast<int>(q));                // rank of R = qtilde
    ds::Plant pl;
    pl.A = 0.5 * randn(rng, n, n);
    pl.B = randn(rng, n, m);
    pl.B1 = randn(rng, n, rb) * randn(rng, rb, p);
    pl.C1 = randn(rng, q, n);
    pl.D1 = randn(rng, q, p);
    pl.E = randn(rng, q, m);
    pl.C = randn(rng, l, n);
    pl.F = randn(rng, l, p);
    const int N = static_cast<int>(3 * (n + m));
    std::vector<Vector> u, w;
    for (int k = 0; k < N; ++k) {
      u.push_back(randn(rng, m, 1));
      w.push_back(Vector::Zero(p));
    }
    const auto rec = ds::record(pl, u, w, randn(rng, n, 1));
    ds::ConsistencySet cs;
    try {
      cs = ds::make_consistency_set(rec, ds::energy_phi(0.1, N, p), pl.B1);
    } catch (const std::exception&) {
      continue;
    }
    const Matrix T = randn(rng, q, rr);
    const Matrix R = T * T.transpose();
    const Matrix Q = -10.0 * Matrix::Identity(p, p);
    const auto supply = ds::supply_factor(Q, Matrix::Zero(p, q), R);
    const auto ing = ds::SynthesisIngredients::from_plant(std::move(cs), supply, pl);
    const auto dim = ds::assemble_pi(ing, 1.0).constraints().at(0).dim();
    const auto expected = (4 * n + p + rr) + (n + m + rb);
    ++cases;
    if (dim != expected) ++mismatches;
    if (rr == 0) ++zero_qt;
    if (rb == 0) ++zero_nt;
  }
  std::ostringstream os;
  os << "cases=" << cases << " mismatches=" << mismatches << " qtilde=0 cases=" << zero_qt
     << " ntilde=0 cases=" << zero_nt;
  return {mismatches == 0 && zero_qt > 0 && zero_nt > 0, os.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome cli_determinism() {
  const fs::path base = fs::temp_directory_path() / ("dissipasynth_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  const fs::path config = fs::path(DS_CONFIG_DIR) / "scalar_hinf.json";
  auto run = [&](const fs::path& out) {
    const std::string cmd = std::string("\"") + DS_CLI_PATH + "\" run \"" + config.string() + "\" --out \"" +
                            out.string() + "\" --seed 5 2>/dev/null";
    return std::system(cmd.c_str());
  };
  const int c1 = run(base / "a");
  const int c2 = run(base / "b");
  int files = 0, differ = 0;
  if (c1 == 0 && c2 == 0) {
    for (const auto& e : fs::directory_iterator(base / "a")) {
      ++files;
      const fs::path other = base / "b" / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
    }
  }
  fs::remove_all(base);
  std::ostringstream os;
  os << "exit codes " << c1 << "," << c2 << " files=" << files << " differing=" << differ;
  return {c1 == 0 && c2 == 0 && files > 0 && differ == 0, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"noise-free recovery", noise_free_recovery},
      {"consistency-set geometry", consistency_geometry},
      {"end-to-end soundness", end_to_end_soundness},
      {"analysis oracle agreement", analysis_oracle},
      {"realization invariance", realization_invariance},
      {"information monotonicity", information_monotonicity},
      {"noise monotonicity", noise_monotonicity},
      {"S-lemma sufficiency", s_lemma_sufficiency},
      {"LMI dimension check", dimension_check},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu (%s): %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
