#pragma once

#include "safembrl/moment_matching.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <utility>

namespace safembrl {

// Which scalar drives the safety response: the belief's position uncertainty
// (contact-safe variant) or the global data-volume proxy 1/N (baseline-2).
enum class UncertaintySource { model, global };

struct SafetyParams {
    double alpha_s = 0.0;   // scaling awareness, >= 0
    double alpha_t = 0.0;   // translating awareness, >= 0
    double beta_s = 0.3;    // minimum scale, in (0, 1]
    double gamma_t = 0.2;   // velocity sensitivity, >= 0
    Eigen::VectorXd u_min_base, u_max_base;  // rad/s per step
    UncertaintySource uncertainty_source = UncertaintySource::model;

    void validate() const;
};

// The uncertainty scalar fed to both mechanisms; +infinity when global with N = 0.
double uncertainty_measure(const SafetyParams& params, const BeliefState& belief,
                           std::int64_t num_samples);

// Scaling factor K_s = (1 - beta_s) exp(-alpha_s * sigma) + beta_s, in [beta_s, 1];
// exactly 1 when alpha_s = 0 or sigma = 0.
double k_s(const SafetyParams& params, const BeliefState& belief, std::int64_t num_samples);

// Translation K_t = (1 - exp(-alpha_t * sigma)) * gamma_t * velocity mean; exactly
// zero when alpha_t = 0, sigma = 0, or the velocity mean vanishes.
Eigen::VectorXd k_t(const SafetyParams& params, const BeliefState& belief,
                    std::int64_t num_samples);

// State-dependent control box (u_min, u_max) = (K_s * base - K_t); its width
// K_s * (base width) stays strictly positive.
std::pair<Eigen::VectorXd, Eigen::VectorXd> limits(const SafetyParams& params,
                                                   const BeliefState& belief,
                                                   std::int64_t num_samples);

}  // namespace safembrl
