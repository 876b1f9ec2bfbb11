#pragma once

#include "safembrl/pmpc.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace safembrl {

enum class ExperimentMode { unsafe_baseline1, global_baseline2, contact_safe };

// Episodic training loop settings. The mode decides the safety alphas and the
// uncertainty source; ln_alpha_* only apply to the modes that use them.
struct ExperimentConfig {
    int num_trials = 12;
    int steps_per_trial = 100;
    // Hyperparameter selection cadence: re-select after every k-th trial when
    // k >= 1; 0 selects after trials 1, 2, 4, 8, ... (doubling) instead.
    int selection_period = 1;
    ExperimentMode mode = ExperimentMode::contact_safe;
    double ln_alpha_s = 6.0;
    double ln_alpha_t = 6.0;
    ArmConfig arm;
    SafetyParams safety;  // base box, beta_s, gamma_t; alphas/source come from the mode
    SolverConfig solver;
    HyperGrid hyper;  // feature count, base lengthscales, selection grids
    double initial_noise_std = 0.1;
    double initial_signal_std = 1.0;
    double weight_position = 1.0;
    double weight_orientation = 1.0;
    std::uint64_t seed = 0;

    SafetyParams resolved_safety() const;
    void validate() const;
};

// All published defaults in one place: M = 65 features, horizon 3, base box
// +/-0.2 rad/s, beta_s = 0.3, gamma_t = 0.2, unit loss weights, 12 x 100 steps.
ExperimentConfig default_experiment_config();

// One row per simulated step. The plan_* fields capture which belief the applied
// control was planned from, so logs alone can certify the ahead-planning order.
struct StepRecord {
    int step = 0;          // 1-based within the trial
    double time = 0.0;     // s, after the control was applied
    Eigen::VectorXd obs;   // belief mean observed before applying the control
    Eigen::VectorXd u;     // rad/s, applied (already projected)
    Eigen::Vector2d theta = Eigen::Vector2d::Zero();      // rad, after the step
    Eigen::Vector2d theta_dot = Eigen::Vector2d::Zero();  // rad/s, after the step
    double tracking_error_m = 0.0;
    double contact_force_n = 0.0;
    double k_s_value = 1.0;
    double sigma_p_norm = 0.0;  // uncertainty scalar at the plan input
    double plan_wall_ms = 0.0;
    std::int64_t plan_seq = 0;   // monotone event stamps: plan precedes apply
    std::int64_t apply_seq = 0;
    Eigen::VectorXd plan_input_mean, plan_input_var;
    Eigen::VectorXd box_min, box_max;  // rad/s, the box the control was drawn from
    bool planning_failed = false;
};

struct TrialLog {
    int trial = 0;  // 1-based
    std::vector<StepRecord> steps;
    double mean_tracking_error_m = 0.0;
    double mean_k_s = 0.0;
    std::int64_t sample_count = 0;  // dataset size after this trial's refit
    std::int64_t variance_clamps = 0;
    bool failed = false;  // simulation diverged; partial steps retained
};

struct RunSummary {
    std::vector<double> trial_mean_error_m;
    std::vector<double> trial_mean_k_s;
    std::vector<double> top_fracs;
    std::vector<double> top_force_mean_n;  // parallel to top_fracs
    std::optional<int> acquisition_trial;  // first trial with mean error < 0.02 m
    std::int64_t total_steps = 0;
};

// Runs the full episodic loop: prior fit, per-trial reset/plan/act/ahead-plan
// cycle, sample collection, end-of-trial refits, and hyperparameter selection
// after trials 1, 2, 4, 8, ... When out_dir is non-empty, writes
// trial_<n>.log / summary.log (JSON lines) and per-trial model checkpoints.
std::vector<TrialLog> run_experiment(const ExperimentConfig& config,
                                     const std::filesystem::path& out_dir = {});

RunSummary aggregate_metrics(const std::vector<TrialLog>& logs,
                             const std::vector<double>& top_fracs = {0.03, 0.05, 0.10});

// Reads back what run_experiment wrote, for comparison and replay tooling.
std::vector<TrialLog> load_trial_logs(const std::filesystem::path& run_dir);

const char* mode_name(ExperimentMode mode);
ExperimentMode mode_from_name(const std::string& name);

}  // namespace safembrl
