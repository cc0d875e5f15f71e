#pragma once

#include <vector>

#include "dissipasynth/types.hpp"

namespace dissipasynth {

/// Open-loop plant
///
///   x+ = A x + B1 w + B u
///   z  = C1 x + D1 w + E u
///   y  = C x + F w
///
/// with n states, p disturbances, m controls, q performance outputs and l
/// measurements.
struct Plant {
  Matrix A, B1, B, C1, D1, E, C, F;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index p() const { return B1.cols(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index q() const { return C1.rows(); }
  Eigen::Index l() const { return C.rows(); }

  /// Checks mutual consistency of all blocks, finiteness and the size cap.
  void validate(Eigen::Index cap = kDefaultDimensionCap) const;
};

/// Dynamic output-feedback controller of the same order as the plant:
///   xc+ = Ac xc + Bc y,  u = Cc xc + Dc y.
struct Controller {
  Matrix Ac, Bc, Cc, Dc;

  void validate_against(const Plant& plant) const;
};

/// Generic discrete-time system x+ = A x + B w, z = C x + D w.
struct StateSpace {
  Matrix A, B, C, D;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  void validate() const;
};

struct FrequencyPoint {
  double theta = 0.0;
  double gain = 0.0;
};

struct FrequencyCurve {
  std::vector<double> grid;  // normalized frequency in [0, pi]
  std::vector<double> gain;  // largest singular value at each grid point
  FrequencyPoint peak;
};

struct Trajectory {
  std::vector<Vector> states;   // N + 1 entries, states[0] = x0
  std::vector<Vector> outputs;  // N entries
};

enum class Exec { serial, parallel };

/// Closed loop of plant and controller; state ordering is (x, xc).
StateSpace close_loop(const Plant& plant, const Controller& ctrl);

Trajectory simulate(const StateSpace& sys, const Vector& x0,
                    const std::vector<Vector>& inputs);

double spectral_radius(const Matrix& A);

inline constexpr int kDefaultFrequencyGrid = 2048;

/// Largest singular value of C (e^{i theta} I - A)^{-1} B + D on a uniform
/// grid over [0, pi] (both ends included). Throws NumericalError("system not
/// Schur stable") when rho(A) >= 1.
FrequencyCurve frequency_response(const StateSpace& sys,
                                  int grid_size = kDefaultFrequencyGrid,
                                  Exec exec = Exec::parallel);

/// Gain at a single frequency, no stability check.
double gain_at(const StateSpace& sys, double theta);

/// Similarity transform of the controller state: (L Ac L^-1, L Bc, Cc L^-1, Dc).
Controller transform_realization(const Controller& ctrl, const Matrix& L);

/// True when sigma_min(M) > kRegularTol * sigma_max(M).
bool is_regular(const Matrix& M, double* condition = nullptr);

}  // namespace dissipasynth
