#include "safembrl/sim_env.hpp"

#include "safembrl/errors.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace safembrl;

namespace {

ArmConfig quiet_config() {
    ArmConfig cfg;
    cfg.process_noise_std = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("forward kinematics hits the textbook poses") {
    const ArmConfig cfg;
    const auto [p0, o0] = forward_kinematics(cfg, {0.0, 0.0});
    CHECK(p0[0] == doctest::Approx(0.65));
    CHECK(p0[1] == doctest::Approx(0.0));
    CHECK(p0[2] == doctest::Approx(-0.5));
    CHECK(o0 == doctest::Approx(0.0));

    const auto [p1, o1] = forward_kinematics(cfg, {std::numbers::pi / 2, 0.0});
    CHECK(p1[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p1[1] == doctest::Approx(0.65));
    CHECK(o1 == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("forward kinematics is Lipschitz in the joint angles") {
    const ArmConfig cfg;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> angle(-3.0, 3.0);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Vector2d theta(angle(rng), angle(rng));
        const Eigen::Vector2d delta = 1e-4 * Eigen::Vector2d(angle(rng), angle(rng));
        const auto [p, o] = forward_kinematics(cfg, theta);
        const auto [q, o2] = forward_kinematics(cfg, theta + delta);
        // per-joint sensitivities are L1+L2 and L2, so the L1 norm of delta bounds the move
        CHECK((q - p).norm() <= (cfg.link1 + cfg.link2) * delta.lpNorm<1>() * (1.0 + 1e-9));
    }
}

TEST_CASE("inverse kinematics round-trips through forward kinematics") {
    const ArmConfig cfg;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const double ang = 2.0 * std::numbers::pi * unit(rng);
        const double rad = 0.1 + 0.5 * unit(rng);
        const Eigen::Vector2d target(rad * std::cos(ang), rad * std::sin(ang));
        const Eigen::Vector2d theta = inverse_kinematics(cfg, target);
        const auto [p, o] = forward_kinematics(cfg, theta);
        CHECK((p.head<2>() - target).norm() < 1e-10);
        CHECK(theta[1] >= 0.0);  // fixed elbow branch
    }
    CHECK_THROWS_AS(inverse_kinematics(cfg, Eigen::Vector2d(1.0, 1.0)), InvalidInputError);
}

TEST_CASE("angle recovery inverts the sin/cos encoding") {
    CHECK(angle_recovery({0.0, 0.0}, {1.0, 1.0})[0] == 0.0);
    CHECK(angle_recovery({1.0, 0.0}, {0.0, 1.0})[0] == doctest::Approx(std::numbers::pi / 2));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    for (int rep = 0; rep < 100; ++rep) {
        const double t = angle(rng);
        const auto rec = angle_recovery({std::sin(t), 0.0}, {std::cos(t), 1.0});
        CHECK(rec[0] == doctest::Approx(t).epsilon(1e-12));
        CHECK(rec[0] > -std::numbers::pi);
        CHECK(rec[0] <= std::numbers::pi);
    }
    CHECK_THROWS_AS(angle_recovery({0.0, 1e-13}, {0.0, 5e-13}), NumericalError);
}

TEST_CASE("the reference circle has the paper geometry") {
    const ArmConfig cfg;
    const auto [p0, o0] = reference(cfg, 0.0);
    const auto [p5, o5] = reference(cfg, 5.0);
    CHECK((p0 - p5).norm() < 1e-12);
    CHECK(o0 == doctest::Approx(o5).epsilon(1e-12));

    for (double t : {0.0, 0.7, 1.9, 2.5, 4.2}) {
        const auto [p, o] = reference(cfg, t);
        CHECK((p.head<2>() - cfg.bowl_center).norm() == doctest::Approx(0.05).epsilon(1e-12));
        CHECK(p[2] == -cfg.stick_length);
    }

    // max speed along the reference = circumference / period
    double vmax = 0.0;
    const double h = 1e-4;
    for (double t = 0.0; t < 5.0; t += 0.05) {
        const auto [pa, oa] = reference(cfg, t);
        const auto [pb, ob] = reference(cfg, t + h);
        vmax = std::max(vmax, (pb - pa).norm() / h);
    }
    CHECK(vmax == doctest::Approx(std::numbers::pi * 0.1 / 5.0).epsilon(1e-3));
}

TEST_CASE("a resting arm far from the wall stays put") {
    SimEnv env(quiet_config(), 11);
    env.reset(inverse_kinematics(env.config(), env.config().bowl_center));
    const Eigen::Vector2d theta0 = env.state().theta;
    const auto event = env.step(Eigen::Vector2d::Zero());
    CHECK(!event.has_value());
    CHECK((env.state().theta - theta0).norm() == 0.0);
    CHECK(env.state().theta_dot.norm() == 0.0);
    CHECK(env.state().time == doctest::Approx(0.1));
}

TEST_CASE("contact force appears only at wall penetration and grows with speed") {
    auto cfg = quiet_config();
    const double radius = cfg.bowl_radius();

    // Inside the wall by a comfortable margin: no contact force.
    {
        SimEnv env(cfg, 12);
        Eigen::Vector2d inside = cfg.bowl_center;
        inside[0] += radius - 0.02;
        env.reset(inverse_kinematics(cfg, inside));
        const auto event = env.step(Eigen::Vector2d::Zero());
        CHECK(!event.has_value());
    }

    // Penetrating at increasing outward speed: monotonically larger force.
    double prev_force = -1.0;
    for (double speed : {0.05, 0.15, 0.3}) {
        SimEnv env(cfg, 13);
        Eigen::Vector2d poked = cfg.bowl_center;
        poked[0] += radius + 0.005;
        const Eigen::Vector2d theta = inverse_kinematics(cfg, poked);
        env.reset(theta);

        // joint velocity that moves the tip radially outward at `speed`
        const double s1 = std::sin(theta[0]), c1 = std::cos(theta[0]);
        const double s12 = std::sin(theta[0] + theta[1]), c12 = std::cos(theta[0] + theta[1]);
        Eigen::Matrix2d jac;
        jac << -cfg.link1 * s1 - cfg.link2 * s12, -cfg.link2 * s12,
            cfg.link1 * c1 + cfg.link2 * c12, cfg.link2 * c12;
        const Eigen::Vector2d outward = (poked - cfg.bowl_center).normalized();
        const Eigen::Vector2d qdot = jac.inverse() * (speed * outward);

        SimState forced = env.state();
        forced.theta_dot = qdot;
        env.reset(theta);
        const auto event = env.step(qdot);  // sets theta_dot = qdot this step
        REQUIRE(event.has_value());
        CHECK(event->force > prev_force);
        prev_force = event->force;
    }
}

TEST_CASE("drag bleeds kinetic energy inside the bowl") {
    auto cfg = quiet_config();
    SimEnv env(cfg, 14);
    env.reset(inverse_kinematics(cfg, cfg.bowl_center));
    env.step(Eigen::Vector2d(0.2, -0.15));  // spin up once, then coast
    double prev = env.state().theta_dot.squaredNorm();
    for (int k = 0; k < 10; ++k) {
        env.step(Eigen::Vector2d::Zero());
        const double now = env.state().theta_dot.squaredNorm();
        CHECK(now <= prev + 1e-15);
        prev = now;
    }
}

TEST_CASE("joint speeds saturate at the actuator limit") {
    auto cfg = quiet_config();
    SimEnv env(cfg, 15);
    env.reset(inverse_kinematics(cfg, cfg.bowl_center));
    for (int k = 0; k < 10; ++k) env.step(Eigen::Vector2d(0.2, 0.2));
    CHECK(env.state().theta_dot.lpNorm<Eigen::Infinity>() <=
          cfg.max_joint_speed + 1e-15);
}

TEST_CASE("observation encodes angles exactly and round-trips") {
    ArmConfig cfg;
    SimEnv env(cfg, 16);
    env.reset({0.4, 1.1});
    const auto belief = env.observe();
    CHECK(belief.mean.size() == 6);
    CHECK(belief.num_position == 4);
    CHECK(belief.var.norm() == 0.0);
    for (int j = 0; j < 2; ++j) {
        const double s = belief.mean[j], c = belief.mean[2 + j];
        CHECK(s * s + c * c == doctest::Approx(1.0).epsilon(1e-15));
    }
    const auto theta = angle_recovery(belief.mean.head<2>(), belief.mean.segment<2>(2));
    CHECK((theta - env.state().theta).norm() < 1e-15);

    env.reset({0.0, 0.0});
    const auto zero = env.observe();
    CHECK(zero.mean.head<2>().norm() == 0.0);          // sin block
    CHECK((zero.mean.segment<2>(2) - Eigen::Vector2d::Ones()).norm() == 0.0);  // cos block
}

TEST_CASE("identical noise seeds reproduce trajectories bit-exactly") {
    ArmConfig cfg;  // noisy
    SimEnv a(cfg, 99), b(cfg, 99), c(cfg, 100);
    const Eigen::Vector2d start = inverse_kinematics(cfg, cfg.bowl_center);
    a.reset(start);
    b.reset(start);
    c.reset(start);
    for (int k = 0; k < 20; ++k) {
        const Eigen::Vector2d u(0.05 * std::sin(0.3 * k), -0.04);
        a.step(u);
        b.step(u);
        c.step(u);
    }
    CHECK((a.state().theta - b.state().theta).norm() == 0.0);
    CHECK((a.state().theta_dot - b.state().theta_dot).norm() == 0.0);
    CHECK((a.state().theta - c.state().theta).norm() > 0.0);
}
