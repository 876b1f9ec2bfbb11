#pragma once

#include "safembrl/lgm.hpp"

#include <Eigen/Core>

namespace safembrl {

// Gaussian belief with diagonal covariance. The leading num_position entries
// form the position block (sin/cos encoding for arm states); the remainder are
// velocities. Cross-covariances are never tracked.
struct BeliefState {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
    int num_position = 0;

    void validate() const;
    // Spectral norm of the diagonal position-block covariance = max position variance.
    double position_uncertainty() const;
};

// Analytic moment matching of the model's posterior through a Gaussian input:
// exact first and second moments of the predictive distribution when the input
// is N(mean, diag(var)) and the control enters as a zero-variance dimension.
BeliefState propagate(const LgmModel& model, const BeliefState& belief,
                      const Eigen::VectorXd& u);

// Expanded deterministic state s = [mean; var] of dimension 2D.
Eigen::VectorXd pack_state(const BeliefState& belief);
BeliefState unpack_state(const Eigen::VectorXd& s, int num_position);

// Deterministic reformulated dynamics: a pure wrapper over propagate.
BeliefState deterministic_dynamics(const LgmModel& model, const BeliefState& belief,
                                   const Eigen::VectorXd& u);

// Count of variance values in [-1e-10, 0) clamped to zero since the last reset;
// surfaced in experiment logs.
long long variance_clamp_count();
void reset_variance_clamp_count();

}  // namespace safembrl
