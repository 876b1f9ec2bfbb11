#include "safembrl/pmpc.hpp"

#include "safembrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace safembrl {

void SolverConfig::validate() const {
    if (population < 4)
        throw InvalidInputError("SolverConfig: population must be >= 4");
    if (elites < 1 || elites > population / 2)
        throw InvalidInputError("SolverConfig: elites must lie in [1, population/2]");
    if (iterations < 1)
        throw InvalidInputError("SolverConfig: iterations must be >= 1");
    if (horizon < 1)
        throw InvalidInputError("SolverConfig: horizon must be >= 1");
}

void LossSpec::validate() const {
    if (!position_ref || !orientation_ref)
        throw InvalidInputError("LossSpec: reference functions must be set");
    if (!std::isfinite(weight_position) || !std::isfinite(weight_orientation) ||
        weight_position < 0.0 || weight_orientation < 0.0)
        throw InvalidInputError("LossSpec: weights must be finite and >= 0");
}

RolloutResult rollout(const LgmModel& model, const BeliefState& start,
                      const Eigen::MatrixXd& controls, const SafetyParams& safety,
                      const StepLoss& step_loss) {
    start.validate();
    if (!step_loss) throw InvalidInputError("rollout: step loss must be set");
    const int horizon = static_cast<int>(controls.cols());
    if (controls.rows() != safety.u_min_base.size())
        throw InvalidInputError("rollout: control rows must match the base box dimension");

    RolloutResult result;
    result.controls.resize(controls.rows(), horizon);
    result.beliefs.reserve(static_cast<size_t>(horizon) + 1);
    result.beliefs.push_back(start);
    result.boxes.reserve(static_cast<size_t>(horizon));

    for (int k = 0; k < horizon; ++k) {
        const BeliefState& here = result.beliefs.back();
        auto box = limits(safety, here, model.num_samples);
        const Eigen::VectorXd u =
            controls.col(k).cwiseMax(box.first).cwiseMin(box.second);
        result.controls.col(k) = u;
        result.boxes.push_back(std::move(box));
        BeliefState next = deterministic_dynamics(model, here, u);
        if (!next.mean.allFinite() || !next.var.allFinite())
            throw NumericalError("rollout: belief diverged at step " + std::to_string(k + 1));
        result.loss += step_loss(next, k + 1);
        result.beliefs.push_back(std::move(next));
    }
    if (!std::isfinite(result.loss))
        throw NumericalError("rollout: non-finite loss");
    return result;
}

MpcPlanner::MpcPlanner(SolverConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
}

void MpcPlanner::reset() {
    rng_.seed(cfg_.seed);
    warm_mean_.resize(0, 0);
}

MpcPlan MpcPlanner::plan(const LgmModel& model, const BeliefState& start,
                         const StepLoss& step_loss, const SafetyParams& safety) {
    safety.validate();
    const int u_dim = static_cast<int>(safety.u_min_base.size());
    const int h = cfg_.horizon;

    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(u_dim, h);
    if (warm_mean_.rows() == u_dim && warm_mean_.cols() == h) mean = warm_mean_;

    // Initial spread: half the width of the box at the start belief.
    const auto start_box = limits(safety, start, model.num_samples);
    Eigen::MatrixXd stddev =
        (0.5 * (start_box.second - start_box.first)).replicate(1, h);

    std::normal_distribution<double> normal;
    MpcPlan best;
    best.loss = std::numeric_limits<double>::infinity();

    Eigen::MatrixXd candidate(u_dim, h);
    for (int iter = 0; iter < cfg_.iterations; ++iter) {
        std::vector<Eigen::MatrixXd> elite_pool;
        std::vector<double> losses;
        std::vector<int> order;
        std::vector<RolloutResult> rollouts;
        rollouts.reserve(static_cast<size_t>(cfg_.population) + 2);

        int diverged = 0;
        for (int c = 0; c < cfg_.population + 2; ++c) {
            if (c == 0) {
                candidate = mean;  // the incumbent is always evaluated
            } else if (c == 1) {
                candidate.setZero();  // so is the do-nothing plan
            } else {
                for (int j = 0; j < u_dim; ++j)
                    for (int k = 0; k < h; ++k)
                        candidate(j, k) = mean(j, k) + stddev(j, k) * normal(rng_);
            }
            try {
                rollouts.push_back(rollout(model, start, candidate, safety, step_loss));
            } catch (const NumericalError&) {
                ++diverged;
                rollouts.push_back(RolloutResult{});
                rollouts.back().loss = std::numeric_limits<double>::infinity();
            }
        }
        if (diverged == cfg_.population + 2)
            throw NumericalError("plan: all candidate rollouts diverged");

        order.resize(rollouts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return rollouts[size_t(a)].loss < rollouts[size_t(b)].loss; });

        // Ties replace the incumbent so an untrained model (all losses equal)
        // still yields varied, seeded exploratory plans.
        for (int idx : order) {
            const auto& r = rollouts[size_t(idx)];
            if (r.loss <= best.loss && std::isfinite(r.loss)) {
                best.controls = r.controls;
                best.beliefs = r.beliefs;
                best.boxes = r.boxes;
                best.loss = r.loss;
            }
        }
        best.iteration_best.push_back(best.loss);

        const int n_elite = std::min<int>(cfg_.elites, static_cast<int>(order.size()));
        Eigen::MatrixXd new_mean = Eigen::MatrixXd::Zero(u_dim, h);
        int used = 0;
        for (int e = 0; e < n_elite; ++e) {
            const auto& r = rollouts[size_t(order[size_t(e)])];
            if (!std::isfinite(r.loss)) break;
            new_mean += r.controls;
            ++used;
        }
        if (used == 0) continue;
        new_mean /= double(used);
        Eigen::MatrixXd new_var = Eigen::MatrixXd::Zero(u_dim, h);
        for (int e = 0; e < used; ++e) {
            const auto& r = rollouts[size_t(order[size_t(e)])];
            new_var += (r.controls - new_mean).cwiseAbs2();
        }
        mean = new_mean;
        stddev = (new_var / double(used)).cwiseSqrt();
    }

    best.iterations = cfg_.iterations;
    warm_mean_.resize(u_dim, h);
    if (h > 1) warm_mean_.leftCols(h - 1) = best.controls.rightCols(h - 1);
    warm_mean_.col(h - 1).setZero();
    return best;
}

MpcPlan MpcPlanner::ahead_plan(const LgmModel& model, const BeliefState& current,
                               const Eigen::VectorXd& u_committed, const StepLoss& step_loss,
                               const SafetyParams& safety) {
    const BeliefState predicted = deterministic_dynamics(model, current, u_committed);
    return plan(model, predicted, step_loss, safety);
}

double tracking_loss(const BeliefState& belief, const LossSpec& spec, const ArmConfig& cfg,
                     double t) {
    spec.validate();
    if (belief.mean.size() != 6)
        throw InvalidInputError("tracking_loss: expected a 6-dimensional arm belief");
    Eigen::Vector2d theta;
    for (int j = 0; j < 2; ++j) {
        const double s = belief.mean[j];
        const double c = belief.mean[2 + j];
        theta[j] = (std::abs(s) < 1e-12 && std::abs(c) < 1e-12) ? 0.0 : std::atan2(s, c);
    }
    const auto [p, heading] = forward_kinematics(cfg, theta);
    const double pos_err = (spec.position_ref(t) - p).norm();
    const double ang_err =
        std::abs(std::remainder(spec.orientation_ref(t) - heading, 2.0 * std::numbers::pi));
    return spec.weight_position * pos_err + spec.weight_orientation * ang_err;
}

StepLoss make_tracking_step_loss(LossSpec spec, ArmConfig cfg, double t0) {
    spec.validate();
    cfg.validate();
    return [spec = std::move(spec), cfg = std::move(cfg), t0](const BeliefState& belief,
                                                              int k) {
        return tracking_loss(belief, spec, cfg, t0 + k * cfg.dt);
    };
}

LossSpec make_reference_loss_spec(const ArmConfig& cfg, double weight_position,
                                  double weight_orientation) {
    LossSpec spec;
    spec.position_ref = [cfg](double t) { return reference(cfg, t).first; };
    spec.orientation_ref = [cfg](double t) { return reference(cfg, t).second; };
    spec.weight_position = weight_position;
    spec.weight_orientation = weight_orientation;
    return spec;
}

}  // namespace safembrl
