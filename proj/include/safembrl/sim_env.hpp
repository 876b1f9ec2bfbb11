#pragma once

#include "safembrl/moment_matching.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace safembrl {

struct ArmConfig {
    double link1 = 0.325, link2 = 0.325;  // m, sum 0.65
    double stick_length = 0.5;            // m, tip hangs below the plane
    Eigen::Vector2d bowl_center{0.40, 0.20};  // m
    double bowl_diameter = 0.24;              // m
    double contact_stiffness = 2000.0;  // N/m against the bowl wall
    double contact_damping = 10.0;      // N s/m on the penetration rate
    double drag_coefficient = 2.0;      // N s/m on the tip inside the bowl
    double yield_force = 0.45;          // N, speed-independent mixing resistance (granular yield)
    double yield_speed = 0.03;          // m/s, tip speed where the yield force saturates
    double force_velocity_gain = 4.0;   // (rad/s)/(N m s): joint-velocity response to torque
    double dt = 0.1;                    // s
    double max_joint_speed = 0.5;       // rad/s actuator saturation
    double process_noise_std = 0.01;    // rad/s added to joint velocities each step

    double bowl_radius() const { return 0.5 * bowl_diameter; }
    void validate() const;
};

struct ContactEvent {
    double time = 0.0;            // s
    double force = 0.0;           // N, >= 0
    Eigen::Vector2d point{0, 0};  // m, tip position at contact
};

struct SimState {
    Eigen::Vector2d theta{0, 0};      // rad
    Eigen::Vector2d theta_dot{0, 0};  // rad/s
    double time = 0.0;                // s
    std::vector<ContactEvent> contacts;
};

// Standard planar 2-link FK; z is fixed at -stick_length, orientation is the
// tip heading theta1 + theta2 wrapped to (-pi, pi].
std::pair<Eigen::Vector3d, double> forward_kinematics(const ArmConfig& cfg,
                                                      const Eigen::Vector2d& theta);

// Closed-form IK with the positive-elbow branch; throws when out of reach.
Eigen::Vector2d inverse_kinematics(const ArmConfig& cfg, const Eigen::Vector2d& target_xy);

// Phase of mu_cos + i mu_sin per joint, in (-pi, pi]; errors on a degenerate pair.
Eigen::Vector2d angle_recovery(const Eigen::Vector2d& mu_sin, const Eigen::Vector2d& mu_cos);

// Circular mixing reference: 0.1 m diameter, 5 s period, centered in the bowl.
// The orientation reference is the arm-consistent tip heading at that position.
std::pair<Eigen::Vector3d, double> reference(const ArmConfig& cfg, double t);

// Velocity-level surrogate of the mixing task. u is the commanded joint-velocity
// increment for the step (rad/s); contact and drag forces feed back on the joint
// velocities through the transposed Jacobian.
class SimEnv {
public:
    SimEnv(ArmConfig cfg, std::uint64_t noise_seed);

    void reset(const Eigen::Vector2d& theta0);
    std::optional<ContactEvent> step(const Eigen::Vector2d& u);

    // Exact observation [sin theta, cos theta, theta_dot] with zero variance.
    BeliefState observe() const;

    const SimState& state() const { return state_; }
    const ArmConfig& config() const { return cfg_; }

private:
    ArmConfig cfg_;
    SimState state_;
    std::uint64_t noise_seed_;
    std::mt19937_64 rng_;
};

}  // namespace safembrl
