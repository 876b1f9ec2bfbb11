#include "safembrl/sim_env.hpp"

#include "safembrl/errors.hpp"

#include <cmath>
#include <numbers>

namespace safembrl {

void ArmConfig::validate() const {
    const bool positive = link1 > 0 && link2 > 0 && stick_length > 0 && bowl_diameter > 0 &&
                          contact_stiffness > 0 && contact_damping > 0 &&
                          drag_coefficient > 0 && force_velocity_gain > 0 && dt > 0 &&
                          max_joint_speed > 0;
    if (!positive)
        throw InvalidInputError("ArmConfig: all physical constants must be positive");
    if (process_noise_std < 0)
        throw InvalidInputError("ArmConfig: process_noise_std must be >= 0");
    if (yield_force < 0 || yield_speed <= 0)
        throw InvalidInputError("ArmConfig: yield_force must be >= 0 and yield_speed > 0");
}

std::pair<Eigen::Vector3d, double> forward_kinematics(const ArmConfig& cfg,
                                                      const Eigen::Vector2d& theta) {
    const double a1 = theta[0];
    const double a12 = theta[0] + theta[1];
    Eigen::Vector3d p;
    p << cfg.link1 * std::cos(a1) + cfg.link2 * std::cos(a12),
        cfg.link1 * std::sin(a1) + cfg.link2 * std::sin(a12), -cfg.stick_length;
    double heading = std::remainder(a12, 2.0 * std::numbers::pi);
    if (heading <= -std::numbers::pi) heading += 2.0 * std::numbers::pi;
    return {p, heading};
}

Eigen::Vector2d inverse_kinematics(const ArmConfig& cfg, const Eigen::Vector2d& target_xy) {
    const double d2 = target_xy.squaredNorm();
    const double d = std::sqrt(d2);
    const double reach = cfg.link1 + cfg.link2;
    const double inner = std::abs(cfg.link1 - cfg.link2);
    if (d > reach + 1e-12 || d < inner - 1e-12)
        throw InvalidInputError("inverse_kinematics: target at distance " + std::to_string(d) +
                                " is outside the reachable annulus");
    double c2 = (d2 - cfg.link1 * cfg.link1 - cfg.link2 * cfg.link2) /
                (2.0 * cfg.link1 * cfg.link2);
    c2 = std::clamp(c2, -1.0, 1.0);
    const double t2 = std::acos(c2);  // positive-elbow branch
    const double t1 = std::atan2(target_xy[1], target_xy[0]) -
                      std::atan2(cfg.link2 * std::sin(t2), cfg.link1 + cfg.link2 * c2);
    return {t1, t2};
}

Eigen::Vector2d angle_recovery(const Eigen::Vector2d& mu_sin, const Eigen::Vector2d& mu_cos) {
    Eigen::Vector2d theta;
    for (int j = 0; j < 2; ++j) {
        if (std::abs(mu_sin[j]) < 1e-12 && std::abs(mu_cos[j]) < 1e-12)
            throw NumericalError("angle_recovery: joint " + std::to_string(j) +
                                 " has an indeterminate sin/cos pair");
        double a = std::atan2(mu_sin[j], mu_cos[j]);
        if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
        theta[j] = a;
    }
    return theta;
}

std::pair<Eigen::Vector3d, double> reference(const ArmConfig& cfg, double t) {
    constexpr double period = 5.0;
    constexpr double radius = 0.05;
    const double phase = 2.0 * std::numbers::pi * t / period;
    Eigen::Vector2d xy = cfg.bowl_center;
    xy[0] += radius * std::cos(phase);
    xy[1] += radius * std::sin(phase);
    const Eigen::Vector2d theta = inverse_kinematics(cfg, xy);
    const auto [p, heading] = forward_kinematics(cfg, theta);
    return {Eigen::Vector3d(xy[0], xy[1], -cfg.stick_length), heading};
}

SimEnv::SimEnv(ArmConfig cfg, std::uint64_t noise_seed)
    : cfg_(std::move(cfg)), noise_seed_(noise_seed), rng_(noise_seed) {
    cfg_.validate();
}

void SimEnv::reset(const Eigen::Vector2d& theta0) {
    state_ = SimState{};
    state_.theta = theta0;
    rng_.seed(noise_seed_);
}

std::optional<ContactEvent> SimEnv::step(const Eigen::Vector2d& u) {
    if (!u.allFinite())
        throw InvalidInputError("SimEnv::step: non-finite control");

    Eigen::Vector2d vel = state_.theta_dot + u;

    // Planar Jacobian of the tip position.
    const double s1 = std::sin(state_.theta[0]);
    const double c1 = std::cos(state_.theta[0]);
    const double s12 = std::sin(state_.theta[0] + state_.theta[1]);
    const double c12 = std::cos(state_.theta[0] + state_.theta[1]);
    Eigen::Matrix2d jac;
    jac << -cfg_.link1 * s1 - cfg_.link2 * s12, -cfg_.link2 * s12,
        cfg_.link1 * c1 + cfg_.link2 * c12, cfg_.link2 * c12;

    const Eigen::Vector2d tip(cfg_.link1 * c1 + cfg_.link2 * c12,
                              cfg_.link1 * s1 + cfg_.link2 * s12);
    const Eigen::Vector2d tip_vel = jac * vel;
    const Eigen::Vector2d radial = tip - cfg_.bowl_center;
    const double dist = radial.norm();

    Eigen::Vector2d force = Eigen::Vector2d::Zero();
    std::optional<ContactEvent> event;
    const double penetration = dist - cfg_.bowl_radius();
    if (penetration > 0.0 && dist > 0.0) {
        const Eigen::Vector2d outward = radial / dist;
        const double pen_rate = outward.dot(tip_vel);
        const double magnitude =
            std::max(0.0, cfg_.contact_stiffness * penetration + cfg_.contact_damping * pen_rate);
        force -= magnitude * outward;  // wall pushes the tip back inward
        if (magnitude > 0.0) {
            event = ContactEvent{state_.time, magnitude, tip};
            state_.contacts.push_back(*event);
        }
    } else if (dist < cfg_.bowl_radius()) {
        force -= cfg_.drag_coefficient * tip_vel;  // viscous mixing resistance
        const double speed = tip_vel.norm();
        if (speed > 0.0)  // granular yield: near-constant magnitude once moving
            force -= cfg_.yield_force * std::tanh(speed / cfg_.yield_speed) / speed * tip_vel;
    }

    Eigen::Vector2d kick = cfg_.force_velocity_gain * cfg_.dt * (jac.transpose() * force);
    if (penetration <= 0.0 && kick.squaredNorm() > 0.0) {
        // Mixing resistance is dissipative: cap the discrete impulse at the
        // speed-minimizing point so it can stop the joints but never reverse them.
        const double stop = -vel.dot(kick) / kick.squaredNorm();
        if (stop < 1.0) kick *= std::max(stop, 0.0);
    }
    vel += kick;

    if (cfg_.process_noise_std > 0.0) {
        std::normal_distribution<double> normal(0.0, cfg_.process_noise_std);
        vel[0] += normal(rng_);
        vel[1] += normal(rng_);
    }

    vel = vel.cwiseMax(-cfg_.max_joint_speed).cwiseMin(cfg_.max_joint_speed);
    state_.theta_dot = vel;
    state_.theta += vel * cfg_.dt;
    state_.time += cfg_.dt;

    if (!state_.theta.allFinite() || !state_.theta_dot.allFinite())
        throw NumericalError("SimEnv::step: simulation diverged");
    return event;
}

BeliefState SimEnv::observe() const {
    BeliefState belief;
    belief.mean.resize(6);
    belief.mean << std::sin(state_.theta[0]), std::sin(state_.theta[1]),
        std::cos(state_.theta[0]), std::cos(state_.theta[1]), state_.theta_dot[0],
        state_.theta_dot[1];
    belief.var = Eigen::VectorXd::Zero(6);
    belief.num_position = 4;
    return belief;
}

}  // namespace safembrl
