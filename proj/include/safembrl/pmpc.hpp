#pragma once

#include "safembrl/safe_limits.hpp"
#include "safembrl/sim_env.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace safembrl {

struct SolverConfig {
    int population = 64;
    int elites = 8;
    int iterations = 5;
    int horizon = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

// Reference trajectory and weights of the tracking loss; no control penalty
// exists by design.
struct LossSpec {
    std::function<Eigen::Vector3d(double)> position_ref;  // m
    std::function<double(double)> orientation_ref;        // rad
    double weight_position = 1.0;
    double weight_orientation = 1.0;

    void validate() const;
};

// Loss of the belief reached after k steps (k = 1..H); summed over the horizon.
using StepLoss = std::function<double(const BeliefState&, int)>;

using LimitBox = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

struct MpcPlan {
    Eigen::MatrixXd controls;          // U x H, already projected into their boxes
    std::vector<BeliefState> beliefs;  // H+1 predicted beliefs, start included
    std::vector<LimitBox> boxes;       // the state-dependent box applied at each step
    double loss = 0.0;
    int iterations = 0;
    std::vector<double> iteration_best;  // best loss seen after each solver iteration
};

struct RolloutResult {
    Eigen::MatrixXd controls;  // projected
    std::vector<BeliefState> beliefs;
    std::vector<LimitBox> boxes;
    double loss = 0.0;
};

// Sequential belief rollout: at every step the control is projected into the box
// computed from the belief reached so far, then the deterministic dynamics advance.
RolloutResult rollout(const LgmModel& model, const BeliefState& start,
                      const Eigen::MatrixXd& controls, const SafetyParams& safety,
                      const StepLoss& step_loss);

// Cross-entropy-method receding-horizon planner. One planner instance owns the
// solver RNG and the warm-start state for one control loop; plans are
// deterministic given the seed and call sequence.
class MpcPlanner {
public:
    explicit MpcPlanner(SolverConfig cfg);

    MpcPlan plan(const LgmModel& model, const BeliefState& start, const StepLoss& step_loss,
                 const SafetyParams& safety);

    // Predict one step ahead under the control already committed, then plan from
    // the predicted belief; the returned first control is the one for step t+1.
    MpcPlan ahead_plan(const LgmModel& model, const BeliefState& current,
                       const Eigen::VectorXd& u_committed, const StepLoss& step_loss,
                       const SafetyParams& safety);

    // Drop warm-start state and reseed, e.g. at trial boundaries.
    void reset();

private:
    SolverConfig cfg_;
    std::mt19937_64 rng_;
    Eigen::MatrixXd warm_mean_;  // empty until the first plan returns
};

// Weighted tracking loss of the belief mean: Euclidean position error plus the
// wrapped absolute orientation error at reference time t. Degenerate sin/cos
// pairs (possible under an untrained model) read as angle zero rather than
// erroring, so candidate evaluation is total.
double tracking_loss(const BeliefState& belief, const LossSpec& spec, const ArmConfig& cfg,
                     double t);

// Binds the tracking loss to a rollout starting at simulation time t0.
StepLoss make_tracking_step_loss(LossSpec spec, ArmConfig cfg, double t0);

// LossSpec following the bowl's circular reference trajectory.
LossSpec make_reference_loss_spec(const ArmConfig& cfg, double weight_position = 1.0,
                                  double weight_orientation = 1.0);

}  // namespace safembrl
