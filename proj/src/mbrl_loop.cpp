#include "safembrl/mbrl_loop.hpp"

#include "safembrl/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>

namespace safembrl {

using json = nlohmann::ordered_json;

namespace {

constexpr int kStateDim = 6;
constexpr int kControlDim = 2;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

json vec_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

json step_to_json(const StepRecord& r) {
    json j;
    j["step"] = r.step;
    j["t_s"] = r.time;
    j["obs"] = vec_to_json(r.obs);
    j["u_rad_s"] = vec_to_json(r.u);
    j["theta_rad"] = std::vector<double>{r.theta[0], r.theta[1]};
    j["theta_dot_rad_s"] = std::vector<double>{r.theta_dot[0], r.theta_dot[1]};
    j["tracking_error_m"] = r.tracking_error_m;
    j["contact_force_n"] = r.contact_force_n;
    j["k_s"] = r.k_s_value;
    j["sigma_p"] = r.sigma_p_norm;
    j["plan_wall_ms"] = r.plan_wall_ms;
    j["plan_seq"] = r.plan_seq;
    j["apply_seq"] = r.apply_seq;
    j["plan_input_mean"] = vec_to_json(r.plan_input_mean);
    j["plan_input_var"] = vec_to_json(r.plan_input_var);
    j["box_min_rad_s"] = vec_to_json(r.box_min);
    j["box_max_rad_s"] = vec_to_json(r.box_max);
    j["planning_failed"] = r.planning_failed;
    return j;
}

StepRecord step_from_json(const json& j) {
    StepRecord r;
    r.step = j.at("step").get<int>();
    r.time = j.at("t_s").get<double>();
    r.obs = vec_from_json(j.at("obs"));
    r.u = vec_from_json(j.at("u_rad_s"));
    const auto th = j.at("theta_rad").get<std::vector<double>>();
    const auto thd = j.at("theta_dot_rad_s").get<std::vector<double>>();
    r.theta = Eigen::Vector2d(th.at(0), th.at(1));
    r.theta_dot = Eigen::Vector2d(thd.at(0), thd.at(1));
    r.tracking_error_m = j.at("tracking_error_m").get<double>();
    r.contact_force_n = j.at("contact_force_n").get<double>();
    r.k_s_value = j.at("k_s").get<double>();
    r.sigma_p_norm = j.at("sigma_p").get<double>();
    r.plan_wall_ms = j.at("plan_wall_ms").get<double>();
    r.plan_seq = j.at("plan_seq").get<std::int64_t>();
    r.apply_seq = j.at("apply_seq").get<std::int64_t>();
    r.plan_input_mean = vec_from_json(j.at("plan_input_mean"));
    r.plan_input_var = vec_from_json(j.at("plan_input_var"));
    r.box_min = vec_from_json(j.at("box_min_rad_s"));
    r.box_max = vec_from_json(j.at("box_max_rad_s"));
    r.planning_failed = j.at("planning_failed").get<bool>();
    return r;
}

void write_trial_file(const std::filesystem::path& dir, const TrialLog& log) {
    const auto path = dir / ("trial_" + std::to_string(log.trial) + ".log");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    for (const auto& step : log.steps) out << step_to_json(step).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_summary_file(const std::filesystem::path& dir, const std::vector<TrialLog>& logs) {
    const auto path = dir / "summary.log";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    for (const auto& log : logs) {
        json j;
        j["record"] = "trial";
        j["trial"] = log.trial;
        j["mean_tracking_error_m"] = log.mean_tracking_error_m;
        j["mean_k_s"] = log.mean_k_s;
        j["samples"] = log.sample_count;
        j["variance_clamps"] = log.variance_clamps;
        j["failed"] = log.failed;
        j["steps"] = log.steps.size();
        out << j.dump() << '\n';
    }
    const auto summary = aggregate_metrics(logs);
    json j;
    j["record"] = "run";
    j["trials"] = logs.size();
    j["total_steps"] = summary.total_steps;
    j["top_fracs"] = summary.top_fracs;
    j["top_force_mean_n"] = summary.top_force_mean_n;
    if (summary.acquisition_trial)
        j["acquisition_trial"] = *summary.acquisition_trial;
    else
        j["acquisition_trial"] = nullptr;
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

struct PendingPlan {
    MpcPlan plan;
    BeliefState input;
    std::int64_t seq = 0;
    double wall_ms = 0.0;
    bool failed = false;
};

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.safety.u_min_base = Eigen::VectorXd::Constant(kControlDim, -0.2);
    cfg.safety.u_max_base = Eigen::VectorXd::Constant(kControlDim, 0.2);
    cfg.hyper.num_features = 65;
    // roughly one data-std per dimension on this task, so that coverage is local
    cfg.hyper.base_lengthscales.resize(kStateDim + kControlDim);
    cfg.hyper.base_lengthscales << 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.2, 0.2;
    cfg.hyper.noise_std = {0.02, 0.05, 0.1, 0.2};
    // Position dimensions gate the safety limits through the predictive
    // variance, so their assumed noise is floored well above the raw process
    // noise: the variance then reflects local data density instead of
    // collapsing to zero on revisited states. The weight posterior only sees
    // the ridge noise/signal ratio, so pairing the floor with an equally
    // diffuse prior leaves the mean fit as sharp as an unfloored one; only the
    // reported uncertainty is scaled up. Velocity dimensions keep an
    // evidence-driven grid, wide enough that contact-heavy trials select a
    // strong damping instead of overfitting the impacts.
    cfg.hyper.noise_std_per_dim = {{0.05}, {0.05}, {0.05}, {0.05},
                                   {0.02, 0.05, 0.1, 0.2},
                                   {0.02, 0.05, 0.1, 0.2}};
    cfg.hyper.signal_std = {0.3, 1.0};
    cfg.hyper.signal_std_per_dim = {{0.75}, {0.75}, {0.75}, {0.75}, {0.3, 1.0}, {0.3, 1.0}};
    cfg.hyper.lengthscale_scale = {0.5, 1.0, 2.0};
    return cfg;
}

SafetyParams ExperimentConfig::resolved_safety() const {
    SafetyParams p = safety;
    switch (mode) {
        case ExperimentMode::unsafe_baseline1:
            p.alpha_s = 0.0;
            p.alpha_t = 0.0;
            p.uncertainty_source = UncertaintySource::model;
            break;
        case ExperimentMode::global_baseline2:
            p.alpha_s = std::exp(ln_alpha_s);
            p.alpha_t = std::exp(ln_alpha_t);
            p.uncertainty_source = UncertaintySource::global;
            break;
        case ExperimentMode::contact_safe:
            p.alpha_s = std::exp(ln_alpha_s);
            p.alpha_t = std::exp(ln_alpha_t);
            p.uncertainty_source = UncertaintySource::model;
            break;
    }
    p.validate();
    return p;
}

void ExperimentConfig::validate() const {
    if (num_trials < 1) throw InvalidInputError("num_trials must be >= 1");
    if (steps_per_trial < 1) throw InvalidInputError("steps_per_trial must be >= 1");
    if (selection_period < 0) throw InvalidInputError("selection_period must be >= 0");
    if (!std::isfinite(ln_alpha_s) || !std::isfinite(ln_alpha_t))
        throw InvalidInputError("ln_alpha values must be finite");
    if (hyper.num_features < 1) throw InvalidInputError("hyper.num_features must be >= 1");
    if (hyper.base_lengthscales.size() != kStateDim + kControlDim)
        throw InvalidInputError("hyper.base_lengthscales must have 8 entries");
    if (hyper.noise_std.empty() || hyper.signal_std.empty() || hyper.lengthscale_scale.empty())
        throw InvalidInputError("hyper grids must be non-empty");
    auto check_grid = [](const std::vector<double>& grid, const char* name) {
        for (double v : grid)
            if (!(v > 0.0))
                throw InvalidInputError(std::string(name) + " entries must be > 0");
    };
    check_grid(hyper.noise_std, "hyper.noise_std");
    check_grid(hyper.signal_std, "hyper.signal_std");
    check_grid(hyper.lengthscale_scale, "hyper.lengthscale_scale");
    auto check_per_dim = [&](const std::vector<std::vector<double>>& per_dim, const char* name) {
        if (per_dim.empty()) return;
        if (per_dim.size() != kStateDim)
            throw InvalidInputError(std::string(name) + " must have one grid per state dimension");
        for (const auto& grid : per_dim) {
            if (grid.empty())
                throw InvalidInputError(std::string(name) + " grids must be non-empty");
            check_grid(grid, name);
        }
    };
    check_per_dim(hyper.noise_std_per_dim, "hyper.noise_std_per_dim");
    check_per_dim(hyper.signal_std_per_dim, "hyper.signal_std_per_dim");
    arm.validate();
    if (!(initial_noise_std > 0.0) || !(initial_signal_std > 0.0))
        throw InvalidInputError("initial noise/signal stds must be > 0");
    if (weight_position < 0.0 || weight_orientation < 0.0 ||
        weight_position + weight_orientation <= 0.0)
        throw InvalidInputError("loss weights must be >= 0 and not both zero");
    if (safety.u_min_base.size() != kControlDim || safety.u_max_base.size() != kControlDim)
        throw InvalidInputError("safety base box must have 2 entries");
    resolved_safety();  // validates box ordering and the mode-resolved params
    solver.validate();
}

std::vector<TrialLog> run_experiment(const ExperimentConfig& config,
                                     const std::filesystem::path& out_dir) {
    config.validate();
    const SafetyParams safety = config.resolved_safety();
    const bool to_files = !out_dir.empty();
    if (to_files) std::filesystem::create_directories(out_dir);

    SimEnv env(config.arm, mix_seed(config.seed, 0xE17));
    HyperGrid hyper = config.hyper;
    hyper.stack_seed = mix_seed(config.seed, 0x57AC);
    SolverConfig solver = config.solver;
    solver.seed = mix_seed(config.seed, 0xCE13);
    MpcPlanner planner(solver);

    Eigen::VectorXd lengthscales = hyper.base_lengthscales;
    Eigen::VectorXd noise_var = Eigen::VectorXd::Constant(
        kStateDim, config.initial_noise_std * config.initial_noise_std);
    Eigen::VectorXd signal_var = Eigen::VectorXd::Constant(
        kStateDim, config.initial_signal_std * config.initial_signal_std);
    FastfoodStack stack =
        build_stack(kStateDim + kControlDim, hyper.num_features, lengthscales, hyper.stack_seed);
    TrainingDataset data(kStateDim + kControlDim, kStateDim);
    LgmModel model = fit(data, stack, noise_var, signal_var);

    const LossSpec loss_spec =
        make_reference_loss_spec(config.arm, config.weight_position, config.weight_orientation);
    const Eigen::Vector2d start_xy = reference(config.arm, 0.0).first.head<2>();
    const Eigen::Vector2d theta_start = inverse_kinematics(config.arm, start_xy);

    std::vector<TrialLog> logs;
    std::int64_t seq = 0;

    const auto timed_plan = [&](auto&& call) {
        PendingPlan pending;
        pending.seq = ++seq;
        const auto begin = std::chrono::steady_clock::now();
        try {
            pending.plan = call();
        } catch (const NumericalError&) {
            pending.failed = true;
        }
        const auto end = std::chrono::steady_clock::now();
        pending.wall_ms = std::chrono::duration<double, std::milli>(end - begin).count();
        return pending;
    };

    for (int trial = 1; trial <= config.num_trials; ++trial) {
        if (to_files)
            save_checkpoint(model,
                            (out_dir / ("model_trial_" + std::to_string(trial) + ".bin")).string());

        TrialLog log;
        log.trial = trial;
        reset_variance_clamp_count();
        env.reset(theta_start);
        planner.reset();

        BeliefState observed = env.observe();
        PendingPlan pending = timed_plan([&] {
            return planner.plan(model, observed,
                                make_tracking_step_loss(loss_spec, config.arm, env.state().time),
                                safety);
        });
        pending.input = observed;

        for (int j = 1; j <= config.steps_per_trial; ++j) {
            const BeliefState s_j = observed;

            StepRecord rec;
            rec.step = j;
            rec.obs = s_j.mean;
            rec.plan_seq = pending.seq;
            rec.plan_wall_ms = pending.wall_ms;
            rec.planning_failed = pending.failed;
            rec.plan_input_mean = pending.input.mean;
            rec.plan_input_var = pending.input.var;
            rec.k_s_value = k_s(safety, pending.input, model.num_samples);
            rec.sigma_p_norm = uncertainty_measure(safety, pending.input, model.num_samples);

            Eigen::VectorXd u;
            if (pending.failed) {
                u = Eigen::VectorXd::Zero(kControlDim);
                const auto box = limits(safety, pending.input, model.num_samples);
                rec.box_min = box.first;
                rec.box_max = box.second;
            } else {
                u = pending.plan.controls.col(0);
                rec.box_min = pending.plan.boxes.front().first;
                rec.box_max = pending.plan.boxes.front().second;
            }
            rec.u = u;
            rec.apply_seq = ++seq;

            try {
                const auto event = env.step(Eigen::Vector2d(u[0], u[1]));
                rec.contact_force_n = event ? event->force : 0.0;
            } catch (const NumericalError&) {
                log.failed = true;
                break;
            }
            rec.time = env.state().time;
            rec.theta = env.state().theta;
            rec.theta_dot = env.state().theta_dot;
            rec.tracking_error_m = (forward_kinematics(config.arm, rec.theta).first -
                                    reference(config.arm, rec.time).first)
                                       .norm();
            log.steps.push_back(rec);

            const BeliefState y_j = env.observe();
            if (j < config.steps_per_trial) {
                pending = timed_plan([&] {
                    return planner.ahead_plan(
                        model, s_j, u,
                        make_tracking_step_loss(loss_spec, config.arm, env.state().time), safety);
                });
                if (pending.failed) {
                    // best-effort input for logging; the applied control will be zero
                    try {
                        pending.input = deterministic_dynamics(model, s_j, u);
                    } catch (const NumericalError&) {
                        pending.input = y_j;
                    }
                } else {
                    pending.input = pending.plan.beliefs.front();
                }
            }

            Eigen::VectorXd sample_input(kStateDim + kControlDim);
            sample_input << s_j.mean, u;
            data.append(sample_input, y_j.mean);
            observed = y_j;
        }

        const bool reselect = config.selection_period > 0
                                  ? trial % config.selection_period == 0
                                  : is_power_of_two(trial);
        if (reselect && data.size() > 0) {
            const SelectedHyperparams selected = select_hyperparameters(data, hyper);
            lengthscales = selected.lengthscales;
            noise_var = selected.noise_var;
            signal_var = selected.signal_var;
            stack = build_stack(kStateDim + kControlDim, hyper.num_features, lengthscales,
                                hyper.stack_seed);
        }
        model = fit(data, stack, noise_var, signal_var);

        log.sample_count = data.size();
        log.variance_clamps = variance_clamp_count();
        if (!log.steps.empty()) {
            double err = 0.0, ks = 0.0;
            for (const auto& r : log.steps) {
                err += r.tracking_error_m;
                ks += r.k_s_value;
            }
            log.mean_tracking_error_m = err / double(log.steps.size());
            log.mean_k_s = ks / double(log.steps.size());
        }
        if (to_files) write_trial_file(out_dir, log);
        logs.push_back(std::move(log));
    }

    if (to_files) write_summary_file(out_dir, logs);
    return logs;
}

RunSummary aggregate_metrics(const std::vector<TrialLog>& logs,
                             const std::vector<double>& top_fracs) {
    for (double f : top_fracs)
        if (!(f > 0.0) || f > 1.0) throw InvalidInputError("top fractions must lie in (0, 1]");

    RunSummary summary;
    summary.top_fracs = top_fracs;
    std::vector<double> forces;
    for (const auto& log : logs) {
        summary.trial_mean_error_m.push_back(log.mean_tracking_error_m);
        summary.trial_mean_k_s.push_back(log.mean_k_s);
        summary.total_steps += std::int64_t(log.steps.size());
        for (const auto& r : log.steps) forces.push_back(r.contact_force_n);
        if (!summary.acquisition_trial && !log.steps.empty() &&
            log.mean_tracking_error_m < 0.02)
            summary.acquisition_trial = log.trial;
    }
    std::sort(forces.begin(), forces.end(), std::greater<double>());
    for (double f : top_fracs) {
        if (forces.empty()) {
            summary.top_force_mean_n.push_back(0.0);
            continue;
        }
        const auto count =
            std::max<std::size_t>(1, std::size_t(std::llround(f * double(forces.size()))));
        const auto used = std::min(count, forces.size());
        const double sum = std::accumulate(forces.begin(), forces.begin() + long(used), 0.0);
        summary.top_force_mean_n.push_back(sum / double(used));
    }
    return summary;
}

std::vector<TrialLog> load_trial_logs(const std::filesystem::path& run_dir) {
    const auto summary_path = run_dir / "summary.log";
    std::ifstream summary(summary_path);
    if (!summary) throw IoError("cannot open " + summary_path.string());

    std::vector<TrialLog> logs;
    std::string line;
    while (std::getline(summary, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("bad summary record in " + summary_path.string() + ": " + e.what());
        }
        if (j.value("record", "") != "trial") continue;
        TrialLog log;
        log.trial = j.at("trial").get<int>();
        log.mean_tracking_error_m = j.at("mean_tracking_error_m").get<double>();
        log.mean_k_s = j.at("mean_k_s").get<double>();
        log.sample_count = j.at("samples").get<std::int64_t>();
        log.variance_clamps = j.at("variance_clamps").get<std::int64_t>();
        log.failed = j.at("failed").get<bool>();

        const auto trial_path = run_dir / ("trial_" + std::to_string(log.trial) + ".log");
        std::ifstream in(trial_path);
        if (!in) throw IoError("cannot open " + trial_path.string());
        std::string step_line;
        while (std::getline(in, step_line)) {
            if (step_line.empty()) continue;
            try {
                log.steps.push_back(step_from_json(json::parse(step_line)));
            } catch (const json::exception& e) {
                throw IoError("bad step record in " + trial_path.string() + ": " + e.what());
            }
        }
        logs.push_back(std::move(log));
    }
    if (logs.empty()) throw IoError("no trial records in " + summary_path.string());
    return logs;
}

const char* mode_name(ExperimentMode mode) {
    switch (mode) {
        case ExperimentMode::unsafe_baseline1: return "baseline1";
        case ExperimentMode::global_baseline2: return "baseline2";
        case ExperimentMode::contact_safe: return "safe";
    }
    throw InvalidInputError("unknown experiment mode");
}

ExperimentMode mode_from_name(const std::string& name) {
    if (name == "baseline1") return ExperimentMode::unsafe_baseline1;
    if (name == "baseline2") return ExperimentMode::global_baseline2;
    if (name == "safe") return ExperimentMode::contact_safe;
    throw InvalidInputError("mode must be baseline1, baseline2, or safe: " + name);
}

}  // namespace safembrl
