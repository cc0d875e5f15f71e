#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dissipasynth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest matrix dimension accepted by the validators. This is a desk-scale
/// control toolkit; everything is stored dense.
inline constexpr Eigen::Index kDefaultDimensionCap = 64;

/// Relative tolerance used by every "≻ 0 / ⪰ 0 / ≺ 0" test unless a caller
/// passes its own: thresholds are tol * (1 + ||M||_2).
inline constexpr double kDefiniteTol = 1e-9;

/// A matrix is regular when sigma_min > kRegularTol * sigma_max.
inline constexpr double kRegularTol = 1e-10;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws DimensionError("<what>: expected RxC, got rxc") on mismatch.
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what);

/// Throws NumericalError when any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

}  // namespace dissipasynth
