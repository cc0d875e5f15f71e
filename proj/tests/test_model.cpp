#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dissipasynth/model.hpp"

namespace ds = dissipasynth;
using ds::Matrix;
using ds::Vector;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

ds::Plant scalar_plant() {
  ds::Plant p;
  p.A = scalar(0.5);
  p.B = scalar(1.0);
  p.B1 = scalar(1.0);
  p.C1 = scalar(1.0);
  p.D1 = scalar(0.0);
  p.E = scalar(0.0);
  p.C = scalar(1.0);
  p.F = scalar(0.0);
  return p;
}

ds::Controller scalar_controller(double a, double b, double c, double d) {
  return {scalar(a), scalar(b), scalar(c), scalar(d)};
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

ds::Plant random_plant(std::mt19937_64& rng, int n, int p, int m, int q, int l) {
  ds::Plant pl;
  pl.A = random_matrix(rng, n, n);
  pl.A *= 0.9 / ds::spectral_radius(pl.A);
  pl.B1 = random_matrix(rng, n, p);
  pl.B = random_matrix(rng, n, m);
  pl.C1 = random_matrix(rng, q, n);
  pl.D1 = random_matrix(rng, q, p);
  pl.E = random_matrix(rng, q, m);
  pl.C = random_matrix(rng, l, n);
  pl.F = random_matrix(rng, l, p);
  return pl;
}

// Small-gain controller keeps the loop Schur stable for these draws.
ds::Controller small_controller(std::mt19937_64& rng, const ds::Plant& pl) {
  const auto n = pl.n(), m = pl.m(), l = pl.l();
  ds::Controller c{random_matrix(rng, n, n), random_matrix(rng, n, l), random_matrix(rng, m, n),
                   random_matrix(rng, m, l)};
  c.Ac *= 0.5 / std::max(1.0, ds::spectral_radius(c.Ac));
  c.Bc *= 0.05;
  c.Cc *= 0.05;
  c.Dc *= 0.05;
  return c;
}

}  // namespace

TEST(CloseLoop, ZeroControllerScalar) {
  const auto cl = ds::close_loop(scalar_plant(), scalar_controller(0, 0, 0, 0));
  Matrix A(2, 2);
  A << 0.5, 0, 0, 0;
  EXPECT_EQ(cl.A, A);
  EXPECT_EQ(cl.B, (Matrix(2, 1) << 1, 0).finished());
  EXPECT_EQ(cl.C, (Matrix(1, 2) << 1, 0).finished());
  EXPECT_EQ(cl.D, scalar(0.0));
}

TEST(CloseLoop, HandEvaluatedScalar) {
  const auto cl = ds::close_loop(scalar_plant(), scalar_controller(0.1, 0.2, 0.3, 0.4));
  Matrix A(2, 2);
  A << 0.9, 0.3, 0.2, 0.1;
  EXPECT_TRUE(cl.A.isApprox(A, 1e-15));
  EXPECT_EQ(cl.B, (Matrix(2, 1) << 1, 0).finished());
  EXPECT_EQ(cl.C, (Matrix(1, 2) << 1, 0).finished());
  EXPECT_EQ(cl.D, scalar(0.0));
}

TEST(CloseLoop, LinearInFeedthrough) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto pl = random_plant(rng, 3, 2, 2, 2, 2);
    auto c1 = small_controller(rng, pl);
    auto c2 = c1;
    c2.Dc = random_matrix(rng, 2, 2);
    const auto a = ds::close_loop(pl, c1);
    const auto b = ds::close_loop(pl, c2);
    const Matrix diff = a.A.topLeftCorner(3, 3) - b.A.topLeftCorner(3, 3);
    EXPECT_TRUE(diff.isApprox(pl.B * (c1.Dc - c2.Dc) * pl.C, 1e-12));
    c1.Dc.setZero();
    EXPECT_TRUE(ds::close_loop(pl, c1).A.topLeftCorner(3, 3).isApprox(pl.A, 1e-15));
  }
}

TEST(CloseLoop, DimensionMismatchNamesBlock) {
  auto c = scalar_controller(0, 0, 0, 0);
  c.Bc = Matrix::Zero(1, 2);
  try {
    ds::close_loop(scalar_plant(), c);
    FAIL();
  } catch (const ds::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("Bc"), std::string::npos);
  }
}

TEST(Plant, RejectsNonFinite) {
  auto p = scalar_plant();
  p.A(0, 0) = std::nan("");
  EXPECT_THROW(p.validate(), ds::NumericalError);
}

TEST(Simulate, TwoStepHandRecursion) {
  ds::StateSpace sys{scalar(0.5), scalar(1), scalar(1), scalar(0)};
  const auto tr = ds::simulate(sys, Vector::Zero(1), {Vector::Ones(1), Vector::Zero(1)});
  ASSERT_EQ(tr.states.size(), 3u);
  ASSERT_EQ(tr.outputs.size(), 2u);
  EXPECT_DOUBLE_EQ(tr.states[0](0), 0.0);
  EXPECT_DOUBLE_EQ(tr.states[1](0), 1.0);
  EXPECT_DOUBLE_EQ(tr.states[2](0), 0.5);
  EXPECT_DOUBLE_EQ(tr.outputs[0](0), 0.0);
  EXPECT_DOUBLE_EQ(tr.outputs[1](0), 1.0);
}

TEST(Simulate, DeadbeatAndZeroInput) {
  std::mt19937_64 rng(1);
  ds::StateSpace sys{Matrix::Zero(3, 3), Matrix::Identity(3, 3), random_matrix(rng, 2, 3),
                     Matrix::Zero(2, 3)};
  std::vector<Vector> u;
  for (int k = 0; k < 5; ++k) u.push_back(random_matrix(rng, 3, 1));
  const auto tr = ds::simulate(sys, Vector::Zero(3), u);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(tr.states[k + 1], u[k]);

  const auto z = ds::simulate(sys, Vector::Zero(3), std::vector<Vector>(4, Vector::Zero(3)));
  for (const auto& x : z.states) EXPECT_TRUE(x.isZero(0.0));
  for (const auto& y : z.outputs) EXPECT_TRUE(y.isZero(0.0));
}

TEST(Simulate, EmptyHorizonRejected) {
  ds::StateSpace sys{scalar(0.5), scalar(1), scalar(1), scalar(0)};
  EXPECT_THROW(ds::simulate(sys, Vector::Zero(1), {}), ds::PreconditionError);
}

TEST(FrequencyResponse, ScalarPeakAtZero) {
  ds::StateSpace sys{scalar(0.5), scalar(1), scalar(1), scalar(0)};
  const auto curve = ds::frequency_response(sys, 2048);
  EXPECT_NEAR(curve.peak.gain, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(curve.peak.theta, 0.0);
  EXPECT_NEAR(curve.gain.back(), 1.0 / 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(curve.grid.back(), std::numbers::pi);

  // Dense sweep oracle computed directly from |1 / (e^{i theta} - 0.5)|.
  double oracle = 0.0;
  for (int j = 0; j <= 100000; ++j) {
    const double th = std::numbers::pi * j / 100000.0;
    oracle = std::max(oracle, 1.0 / std::abs(std::polar(1.0, th) - 0.5));
  }
  EXPECT_NEAR(curve.peak.gain, oracle, 1e-12);
}

TEST(FrequencyResponse, StaticGain) {
  ds::StateSpace sys{scalar(0), scalar(0), scalar(0), scalar(-0.7)};
  const auto curve = ds::frequency_response(sys, 16);
  for (double g : curve.gain) EXPECT_NEAR(g, 0.7, 1e-15);
}

TEST(FrequencyResponse, UnstableRejected) {
  ds::StateSpace sys{scalar(1.1), scalar(1), scalar(1), scalar(0)};
  EXPECT_THROW(ds::frequency_response(sys, 16), ds::NumericalError);
  ds::StateSpace ok{scalar(0.5), scalar(1), scalar(1), scalar(0)};
  EXPECT_THROW(ds::frequency_response(ok, 1), ds::PreconditionError);
}

TEST(FrequencyResponse, ParallelMatchesSerial) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 5; ++t) {
    const auto pl = random_plant(rng, 4, 2, 1, 2, 2);
    const auto cl = ds::close_loop(pl, small_controller(rng, pl));
    const auto a = ds::frequency_response(cl, 512, ds::Exec::serial);
    const auto b = ds::frequency_response(cl, 512, ds::Exec::parallel);
    EXPECT_EQ(a.gain, b.gain);
    EXPECT_EQ(a.peak.theta, b.peak.theta);
  }
}

// Pulse response DFT magnitude matches the gain curve (scalar output).
TEST(FrequencyResponse, AgreesWithPulseResponseDft) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 5; ++t) {
    const auto pl = random_plant(rng, 3, 1, 1, 1, 1);
    const auto cl = ds::close_loop(pl, small_controller(rng, pl));
    const int N = 1024;
    std::vector<Vector> u(N, Vector::Zero(1));
    u[0](0) = 1.0;
    const auto tr = ds::simulate(cl, Vector::Zero(cl.states()), u);
    const int grid = 33;
    const auto curve = ds::frequency_response(cl, grid);
    for (int j = 0; j < grid; ++j) {
      std::complex<double> acc = 0.0;
      for (int k = 0; k < N; ++k) acc += tr.outputs[k](0) * std::polar(1.0, -curve.grid[j] * k);
      EXPECT_NEAR(std::abs(acc), curve.gain[j], 0.01 * curve.gain[j]);
    }
  }
}

TEST(TransformRealization, IdentityAndScalar) {
  const auto c = scalar_controller(0.1, 0.2, 0.3, 0.4);
  const auto same = ds::transform_realization(c, Matrix::Identity(1, 1));
  EXPECT_EQ(same.Ac, c.Ac);
  EXPECT_EQ(same.Bc, c.Bc);
  EXPECT_EQ(same.Cc, c.Cc);
  EXPECT_EQ(same.Dc, c.Dc);
  const auto t = ds::transform_realization(c, scalar(2.0));
  EXPECT_NEAR(t.Ac(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(t.Bc(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(t.Cc(0, 0), 0.15, 1e-15);
  EXPECT_NEAR(t.Dc(0, 0), 0.4, 1e-15);
}

TEST(TransformRealization, SingularRejected) {
  const auto c = scalar_controller(0.1, 0.2, 0.3, 0.4);
  EXPECT_THROW(ds::transform_realization(c, scalar(0.0)), ds::NumericalError);
  ds::Controller c2{Matrix::Identity(2, 2), Matrix::Ones(2, 1), Matrix::Ones(1, 2),
                    Matrix::Zero(1, 1)};
  Matrix L(2, 2);
  L << 1, 2, 2, 4;
  EXPECT_THROW(ds::transform_realization(c2, L), ds::NumericalError);
}

TEST(TransformRealization, PreservesClosedLoopCurve) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 20; ++t) {
    const auto pl = random_plant(rng, 3, 2, 1, 2, 2);
    const auto c = small_controller(rng, pl);
    Matrix L = random_matrix(rng, 3, 3);
    double cond = 0;
    if (!ds::is_regular(L, &cond) || cond > 1e3) continue;
    const auto a = ds::frequency_response(ds::close_loop(pl, c), 256);
    const auto b = ds::frequency_response(ds::close_loop(pl, ds::transform_realization(c, L)), 256);
    for (std::size_t j = 0; j < a.gain.size(); ++j) EXPECT_NEAR(a.gain[j], b.gain[j], 1e-8);
    EXPECT_EQ(a.peak.theta, b.peak.theta);
  }
}
