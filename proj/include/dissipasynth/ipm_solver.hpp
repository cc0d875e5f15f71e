#pragma once

#include "dissipasynth/lmi.hpp"

namespace dissipasynth {

/// Dense primal-dual path-following solver for
///
///   minimize c^T x  s.t.  F0_k + sum_i x_i F_{k,i} ⪰ 0,  k = 1..K
///
/// using the HKM search direction with Mehrotra predictor-corrector steps and
/// an infeasible starting point. When the main run does not converge, a
/// maximum-slack phase-I problem decides between "infeasible" (best slack
/// below -feas_tol), "error" (feasible but the iterates diverged, i.e. the
/// objective is unbounded) and "inaccurate".
///
/// Sized for the small dense problems in this library (LMI dimension and
/// variable count in the tens).
class InteriorPointBackend final : public SdpBackend {
 public:
  std::string name() const override { return "interior-point"; }
  SdpSolution solve(const SdpProblem& problem, const SdpOptions& options) const override;
};

}  // namespace dissipasynth
