#include "safembrl/safe_limits.hpp"

#include "safembrl/errors.hpp"

#include <cmath>
#include <limits>

namespace safembrl {

void SafetyParams::validate() const {
    if (!(alpha_s >= 0.0) || !(alpha_t >= 0.0))
        throw InvalidInputError("SafetyParams: alpha_s and alpha_t must be >= 0");
    if (!(beta_s > 0.0) || !(beta_s <= 1.0))
        throw InvalidInputError("SafetyParams: beta_s must lie in (0, 1]");
    if (!(gamma_t >= 0.0))
        throw InvalidInputError("SafetyParams: gamma_t must be >= 0");
    if (u_min_base.size() == 0 || u_min_base.size() != u_max_base.size())
        throw InvalidInputError("SafetyParams: base control box sizes do not match");
    if (((u_max_base - u_min_base).array() <= 0.0).any())
        throw InvalidInputError("SafetyParams: u_max_base must exceed u_min_base elementwise");
}

namespace {

// exp(-alpha * sigma) with the conventions needed at the edges: alpha = 0 gives
// exactly 1 (even for infinite sigma), infinite sigma gives exactly 0 otherwise.
double decay(double alpha, double sigma) {
    if (alpha == 0.0) return 1.0;
    if (std::isinf(sigma)) return 0.0;
    return std::exp(-alpha * sigma);
}

}  // namespace

double uncertainty_measure(const SafetyParams& params, const BeliefState& belief,
                           std::int64_t num_samples) {
    if (params.uncertainty_source == UncertaintySource::global)
        return num_samples > 0 ? 1.0 / double(num_samples)
                               : std::numeric_limits<double>::infinity();
    return belief.position_uncertainty();
}

double k_s(const SafetyParams& params, const BeliefState& belief, std::int64_t num_samples) {
    params.validate();
    belief.validate();
    const double d = decay(params.alpha_s, uncertainty_measure(params, belief, num_samples));
    if (d == 1.0) return 1.0;
    return (1.0 - params.beta_s) * d + params.beta_s;
}

Eigen::VectorXd k_t(const SafetyParams& params, const BeliefState& belief,
                    std::int64_t num_samples) {
    params.validate();
    belief.validate();
    const Eigen::Index num_velocity = belief.mean.size() - belief.num_position;
    if (params.u_min_base.size() != num_velocity)
        throw InvalidInputError("k_t: control dimension must match the velocity block size");
    const double d = decay(params.alpha_t, uncertainty_measure(params, belief, num_samples));
    if (d == 1.0) return Eigen::VectorXd::Zero(num_velocity);
    return (1.0 - d) * params.gamma_t * belief.mean.tail(num_velocity);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> limits(const SafetyParams& params,
                                                   const BeliefState& belief,
                                                   std::int64_t num_samples) {
    const double scale = k_s(params, belief, num_samples);
    const Eigen::VectorXd shift = k_t(params, belief, num_samples);
    if (scale == 1.0 && shift.isZero(0.0))
        return {params.u_min_base, params.u_max_base};
    return {scale * params.u_min_base - shift, scale * params.u_max_base - shift};
}

}  // namespace safembrl
