#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dissipasynth/analysis.hpp"

namespace ds = dissipasynth;
using ds::Matrix;
using ds::Vector;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

ds::StateSpace scalar_sys(double a) { return {scalar(a), scalar(1.0), scalar(1.0), scalar(0.0)}; }

bool certify_hinf(const ds::StateSpace& sys, double gamma,
                  const ds::SdpBackend& backend = ds::default_backend()) {
  const auto p = sys.inputs(), q = sys.C.rows();
  return ds::certify_dissipativity(sys, -gamma * gamma * Matrix::Identity(p, p), Matrix::Zero(p, q),
                                   Matrix::Identity(q, q), {}, backend)
      .has_value();
}

double certified_gamma(const ds::StateSpace& sys, double hi) {
  double lo = 0.0;
  while (!certify_hinf(sys, hi)) hi *= 2.0;
  while (hi - lo > 1e-4 * hi) {
    const double mid = 0.5 * (lo + hi);
    (certify_hinf(sys, mid) ? hi : lo) = mid;
  }
  return hi;
}

ds::StateSpace random_stable(std::mt19937_64& rng, Eigen::Index n, Eigen::Index in, Eigen::Index out) {
  std::normal_distribution<double> g;
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  ds::StateSpace s{rnd(n, n), rnd(n, in), rnd(out, n), 0.3 * rnd(out, in)};
  s.A *= 0.85 / std::max(1e-3, ds::spectral_radius(s.A));
  return s;
}

// Brute force for problems with at most two slots whose objective sits on a
// single slot: grid the other slot, bisect the objective slot for feasibility.
class GridBackend final : public ds::SdpBackend {
 public:
  std::string name() const override { return "grid"; }
  ds::SdpSolution solve(const ds::SdpProblem& prob, const ds::SdpOptions&) const override {
    ds::SdpSolution sol;
    const Vector c = *prob.objective();
    Eigen::Index obj = 0;
    c.cwiseAbs().maxCoeff(&obj);
    const Eigen::Index other = prob.num_slots() == 2 ? 1 - obj : -1;
    std::vector<double> grid{0.0};
    for (int i = 0; i <= 600; ++i) {
      const double v = std::pow(10.0, -3.0 + 6.0 * i / 600);
      grid.push_back(v);
      grid.push_back(-v);
    }
    if (other < 0) grid = {0.0};
    double best = std::numeric_limits<double>::infinity();
    for (double g : grid) {
      Vector x = Vector::Zero(prob.num_slots());
      if (other >= 0) x(other) = g;
      // Feasible objective values form a half-line; find its end.
      const double dir = c(obj) > 0 ? -1.0 : 1.0;  // direction that improves the objective
      double bad = 1e3 * dir, good = -1e3 * dir;
      x(obj) = good;
      if (ds::worst_slack(prob, x) < 0.0) continue;
      for (int k = 0; k < 100; ++k) {
        x(obj) = 0.5 * (bad + good);
        (ds::worst_slack(prob, x) >= 0.0 ? good : bad) = x(obj);
      }
      x(obj) = good;
      if (c.dot(x) < best) {
        best = c.dot(x);
        sol.x = x;
      }
    }
    sol.status = sol.x.size() ? ds::SdpStatus::optimal : ds::SdpStatus::infeasible;
    return sol;
  }
};

}  // namespace

TEST(Certify, ScalarHinfThreshold) {
  const auto sys = scalar_sys(0.5);
  EXPECT_TRUE(certify_hinf(sys, 2.1));
  EXPECT_FALSE(certify_hinf(sys, 1.9));
}

TEST(Certify, CertificateSatisfiesLmi) {
  const auto sys = scalar_sys(0.5);
  const auto cert = ds::certify_dissipativity(sys, scalar(-4.41), scalar(0.0), scalar(1.0));
  ASSERT_TRUE(cert.has_value());
  EXPECT_TRUE(ds::is_posdef(cert->P));
  EXPECT_TRUE(ds::is_negdef(ds::dissipation_lmi(sys, cert->P, scalar(-4.41), scalar(0.0), scalar(1.0))));
  EXPECT_GT(cert->slack, 0.0);
}

TEST(Certify, UnstableNeverCertified) {
  const auto sys = scalar_sys(1.1);
  EXPECT_FALSE(certify_hinf(sys, 100.0));
  EXPECT_FALSE(ds::certify_dissipativity(sys, scalar(-1.0), scalar(0.0), scalar(0.0)).has_value());
}

TEST(Certify, ZeroSystem) {
  const ds::StateSpace sys{scalar(0.0), scalar(0.0), scalar(0.0), scalar(0.0)};
  EXPECT_TRUE(certify_hinf(sys, 1.0));
}

TEST(Certify, DimensionMismatch) {
  EXPECT_THROW(ds::certify_dissipativity(scalar_sys(0.5), Matrix::Identity(2, 2), scalar(0.0), scalar(1.0)),
               ds::DimensionError);
}

TEST(Certify, MockBackendSameDecisions) {
  const GridBackend grid;
  for (double gamma : {1.9, 2.1, 3.0}) {
    EXPECT_EQ(certify_hinf(scalar_sys(0.5), gamma), certify_hinf(scalar_sys(0.5), gamma, grid)) << gamma;
  }
  EXPECT_EQ(certify_hinf(scalar_sys(1.1), 5.0), certify_hinf(scalar_sys(1.1), 5.0, grid));
  EXPECT_FALSE(certify_hinf(scalar_sys(1.1), 5.0, grid));
  EXPECT_TRUE(certify_hinf(scalar_sys(0.5), 2.1, grid));
}

TEST(Certify, BisectionMatchesFrequencySweep) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index n = 1 + trial;
    const auto sys = random_stable(rng, n, 1 + trial % 2, 1 + (trial / 2) % 2);
    const double norm = ds::frequency_response(sys, 8192, ds::Exec::serial).peak.gain;
    const double gam = certified_gamma(sys, 2.0 * norm);
    EXPECT_NEAR(gam / norm, 1.0, 1e-3) << "n=" << n;
    EXPECT_GE(gam, norm * (1 - 1e-6));
  }
}

TEST(Storage, CertifiedSystemPasses) {
  const auto sys = scalar_sys(0.5);
  const auto cert = ds::certify_dissipativity(sys, scalar(-4.41), scalar(0.0), scalar(1.0));
  ASSERT_TRUE(cert.has_value());
  EXPECT_TRUE(ds::storage_trajectory_check(sys, *cert, scalar(-4.41), scalar(0.0), scalar(1.0), 200, 100, 3));
}

TEST(Storage, InvalidatedCertificateFails) {
  const auto sys = scalar_sys(0.5);
  const Matrix Q = scalar(-4.41), S = scalar(0.0), R = scalar(1.0);
  auto cert = ds::certify_dissipativity(sys, Q, S, R);
  ASSERT_TRUE(cert.has_value());
  int k = 0;
  while (ds::max_eigenvalue(ds::dissipation_lmi(sys, cert->P, Q, S, R)) < 0.0) {
    cert->P += 0.5 * Matrix::Identity(1, 1);
    ++k;
  }
  EXPECT_GT(k, 0);
  EXPECT_FALSE(ds::storage_trajectory_check(sys, *cert, Q, S, R, 200, 100, 3));
}

TEST(Storage, ZeroTrajectorySkipped) {
  const ds::StateSpace sys{scalar(0.5), scalar(0.0), scalar(1.0), scalar(0.0)};
  ds::Certificate cert{scalar(1.0), 0.1};
  // w has no effect and x decays; s = -w^2 + z^2 holds the decrease.
  EXPECT_TRUE(ds::storage_trajectory_check(sys, cert, scalar(0.0), scalar(0.0), scalar(0.0), 50, 3, 1));
}

TEST(SLemma, ConstructedInstanceHasNoCounterexample) {
  Matrix K(3, 3);
  K << 1.0, 0.2, 0.1,
       0.2, -1.0, 0.0,
       0.1, 0.0, -2.0;
  const Matrix M = 2.0 * K + Matrix::Identity(3, 3);
  const auto r = ds::s_lemma_check(M, K, 1, 2.0, 1000, 5);
  EXPECT_TRUE(r.reduction_holds);
  EXPECT_EQ(r.checked, 1000);
  EXPECT_FALSE(r.counterexample.has_value());
}

TEST(SLemma, ScalarReductionFails) {
  Matrix K(2, 2), M(2, 2);
  K << 1.0, 0.0, 0.0, -1.0;
  M << 3.0, 0.0, 0.0, -1.0;
  const auto r = ds::s_lemma_check(M, K, 1, 1.0, 100, 1);
  EXPECT_FALSE(r.reduction_holds);
  EXPECT_EQ(r.checked, 0);
}

TEST(SLemma, PreconditionsChecked) {
  Matrix K(2, 2);
  K << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(ds::s_lemma_check(K, K, 1, -0.5, 10, 1), ds::PreconditionError);
  Matrix bad(2, 2);
  bad << 1.0, 0.0, 0.0, 1.0;
  EXPECT_THROW(ds::s_lemma_check(bad, bad, 1, 1.0, 10, 1), ds::PreconditionError);
  Matrix empty(2, 2);
  empty << -1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(ds::s_lemma_check(empty, empty, 1, 1.0, 10, 1), ds::PreconditionError);
}

TEST(SLemma, SerialMatchesParallel) {
  Matrix K(4, 4);
  K << 2.0, 0.1, 0.3, 0.0,
       0.1, 1.0, 0.0, 0.2,
       0.3, 0.0, -1.0, 0.1,
       0.0, 0.2, 0.1, -1.5;
  const Matrix M = 1.5 * K + 0.1 * Matrix::Identity(4, 4);
  const auto a = ds::s_lemma_check(M, K, 2, 1.5, 200, 9, ds::Exec::serial);
  const auto b = ds::s_lemma_check(M, K, 2, 1.5, 200, 9, ds::Exec::parallel);
  EXPECT_EQ(a.counterexample.has_value(), b.counterexample.has_value());
  EXPECT_FALSE(a.counterexample.has_value());
}

TEST(Certify, BadlyScaledRealizationStillCertified) {
  // x = T x_hat with wildly different state scales leaves the transfer
  // function unchanged; the certified level must follow it.
  std::mt19937_64 rng(17);
  const auto s = random_stable(rng, 3, 1, 1);
  const Matrix T = Vector(Vector::LinSpaced(3, -4.0, 4.0).unaryExpr([](double e) { return std::pow(10.0, e); })).asDiagonal();
  const Matrix Tinv = T.inverse();
  const ds::StateSpace scaled{Tinv * s.A * T, Tinv * s.B, s.C * T, s.D};
  const double g = certified_gamma(s, 1.0);
  EXPECT_TRUE(certify_hinf(scaled, g * 1.001));
  EXPECT_FALSE(certify_hinf(scaled, g * 0.99));
}
