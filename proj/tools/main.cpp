#include "safembrl/config.hpp"
#include "safembrl/errors.hpp"
#include "safembrl/mbrl_loop.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace safembrl;

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("SAFEMBRL_OUT")) return env;
    return "runs";
}

// two-sided 95% Student t quantile
double t_quantile_95(int dof) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) return 0.0;
    if (dof <= 30) return table[dof - 1];
    if (dof <= 40) return 2.021;
    if (dof <= 60) return 2.000;
    if (dof <= 120) return 1.980;
    return 1.960;
}

struct Stat {
    double mean = 0.0;
    double ci95 = 0.0;  // half-width; zero for n = 1
    int n = 0;
};

Stat summarize(const std::vector<double>& values) {
    Stat s;
    s.n = int(values.size());
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= double(s.n);
    if (s.n < 2) return s;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / double(s.n - 1));
    s.ci95 = t_quantile_95(s.n - 1) * sd / std::sqrt(double(s.n));
    return s;
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// ---------------------------------------------------------------- run

struct RunOptions {
    std::string config_path;
    std::string seeds = "0";
    std::string out_root;
    int jobs = 1;
    std::string mode_override;
    std::vector<double> ln_alpha_s, ln_alpha_t;  // at most one entry each
};

int cmd_run(const RunOptions& opt) {
    ExperimentConfig base =
        opt.config_path.empty() ? default_experiment_config() : load_config_file(opt.config_path);
    if (!opt.mode_override.empty()) base.mode = mode_from_name(opt.mode_override);
    if (!opt.ln_alpha_s.empty()) base.ln_alpha_s = opt.ln_alpha_s.back();
    if (!opt.ln_alpha_t.empty()) base.ln_alpha_t = opt.ln_alpha_t.back();
    base.validate();

    const auto seeds = parse_seed_list(opt.seeds);
    const fs::path out_root = opt.out_root.empty() ? default_out_root() : opt.out_root;
    fs::create_directories(out_root);

    std::vector<std::string> reports(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex fail_mutex;
    std::vector<std::string> failures;

    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1)) {
            ExperimentConfig cfg = base;
            cfg.seed = seeds[i];
            const std::string run_id =
                std::string(mode_name(cfg.mode)) + "_seed" + std::to_string(cfg.seed);
            const fs::path dir = out_root / run_id;
            try {
                fs::create_directories(dir);
                RunManifest manifest;
                manifest.run_id = run_id;
                manifest.version = version_string();
                manifest.seed = cfg.seed;
                manifest.out_dir = dir.string();
                manifest.config = config_to_json(cfg);
                manifest.write(dir / "manifest.json");
                const auto logs = run_experiment(cfg, dir);
                const auto summary = aggregate_metrics(logs);
                std::string line = run_id + ": trials=" + std::to_string(logs.size());
                line += " final_error_m=" + fmt(summary.trial_mean_error_m.back());
                line += " acquisition=";
                line += summary.acquisition_trial ? std::to_string(*summary.acquisition_trial)
                                                  : std::string("none");
                line += " top5_force_n=" + fmt(summary.top_force_mean_n.at(1), 2);
                line += " -> " + dir.string();
                reports[i] = line;
            } catch (const std::exception& e) {
                std::lock_guard lock(fail_mutex);
                failures.push_back(run_id + ": " + e.what());
            }
        }
    };

    const int jobs = std::max(1, std::min<int>(opt.jobs, int(seeds.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (const auto& r : reports)
        if (!r.empty()) std::cout << r << '\n';
    for (const auto& f : failures) std::cerr << "run failed: " << f << '\n';
    return failures.empty() ? 0 : 1;
}

// ---------------------------------------------------------------- compare

struct Arm {
    std::string label;
    std::vector<RunSummary> runs;
};

Arm load_arm(const fs::path& dir) {
    Arm arm;
    arm.label = dir.filename().string().empty() ? dir.string() : dir.filename().string();
    if (fs::exists(dir / "summary.log")) {
        arm.runs.push_back(aggregate_metrics(load_trial_logs(dir)));
        return arm;
    }
    std::vector<fs::path> subdirs;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_directory() && fs::exists(entry.path() / "summary.log"))
                subdirs.push_back(entry.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& sub : subdirs) arm.runs.push_back(aggregate_metrics(load_trial_logs(sub)));
    if (arm.runs.empty())
        throw IoError("no run summaries under " + dir.string());
    return arm;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_opt) {
    std::vector<Arm> arms;
    for (const auto& d : dirs) arms.push_back(load_arm(d));
    const fs::path out_dir = out_opt.empty() ? "." : out_opt;
    fs::create_directories(out_dir);

    std::size_t num_trials = 0;
    for (const auto& arm : arms)
        for (const auto& run : arm.runs)
            num_trials = std::max(num_trials, run.trial_mean_error_m.size());

    // per-trial table -----------------------------------------------------
    const auto trials_path = out_dir / "compare_trials.tsv";
    std::ofstream trials(trials_path);
    trials << "trial";
    for (const auto& arm : arms)
        trials << '\t' << arm.label << ":mean_error_m\t" << arm.label << ":ci95_m\t" << arm.label
               << ":mean_k_s";
    trials << '\n';
    std::cout << "per-trial mean tracking error (m):\n";
    std::printf("  %-6s", "trial");
    for (const auto& arm : arms) std::printf(" %20s", arm.label.c_str());
    std::printf("\n");
    for (std::size_t t = 0; t < num_trials; ++t) {
        trials << (t + 1);
        std::printf("  %-6zu", t + 1);
        for (const auto& arm : arms) {
            std::vector<double> errs, ks;
            for (const auto& run : arm.runs)
                if (t < run.trial_mean_error_m.size()) {
                    errs.push_back(run.trial_mean_error_m[t]);
                    ks.push_back(run.trial_mean_k_s[t]);
                }
            const Stat e = summarize(errs), k = summarize(ks);
            trials << '\t' << fmt(e.mean, 6) << '\t' << fmt(e.ci95, 6) << '\t' << fmt(k.mean, 4);
            if (e.n > 1)
                std::printf("  %8.4f ±%7.4f", e.mean, e.ci95);
            else
                std::printf("  %8.4f %8s", e.mean, "");
        }
        trials << '\n';
        std::printf("\n");
    }

    // force table ----------------------------------------------------------
    const auto forces_path = out_dir / "compare_forces.tsv";
    std::ofstream forces(forces_path);
    forces << "top_frac";
    for (const auto& arm : arms)
        forces << '\t' << arm.label << ":mean_force_n\t" << arm.label << ":ci95_n";
    for (std::size_t a = 1; a < arms.size(); ++a)
        forces << '\t' << arms[a].label << ":reduction_vs_" << arms[0].label << "_pct";
    forces << '\n';

    const auto& fracs = arms.front().runs.front().top_fracs;
    std::cout << "\ntop-k% contact force (N):\n";
    for (std::size_t f = 0; f < fracs.size(); ++f) {
        forces << fmt(fracs[f], 2);
        std::printf("  top %4.0f%%", fracs[f] * 100.0);
        std::vector<double> arm_means;
        for (const auto& arm : arms) {
            std::vector<double> values;
            for (const auto& run : arm.runs)
                if (f < run.top_force_mean_n.size()) values.push_back(run.top_force_mean_n[f]);
            const Stat s = summarize(values);
            arm_means.push_back(s.mean);
            forces << '\t' << fmt(s.mean, 4) << '\t' << fmt(s.ci95, 4);
            std::printf("  %s: %8.3f ±%6.3f", arm.label.c_str(), s.mean, s.ci95);
        }
        for (std::size_t a = 1; a < arms.size(); ++a) {
            double pct;
            if (arm_means[a] == arm_means[0])
                pct = 0.0;
            else if (arm_means[0] > 0.0)
                pct = 100.0 * (arm_means[0] - arm_means[a]) / arm_means[0];
            else
                pct = std::numeric_limits<double>::quiet_NaN();
            forces << '\t' << fmt(pct, 2);
            std::printf("  reduction: %6.2f%%", pct);
        }
        forces << '\n';
        std::printf("\n");
    }

    // acquisition table ------------------------------------------------------
    const auto acq_path = out_dir / "compare_acquisition.tsv";
    std::ofstream acq(acq_path);
    acq << "arm\truns\tacquired\tmean_acquisition_trial\n";
    std::cout << "\ntask acquisition (mean tracking error < 0.02 m):\n";
    for (const auto& arm : arms) {
        int acquired = 0;
        double sum_trial = 0.0;
        for (const auto& run : arm.runs)
            if (run.acquisition_trial) {
                ++acquired;
                sum_trial += *run.acquisition_trial;
            }
        const double mean_trial = acquired > 0 ? sum_trial / acquired : 0.0;
        acq << arm.label << '\t' << arm.runs.size() << '\t' << acquired << '\t'
            << fmt(mean_trial, 2) << '\n';
        std::printf("  %-20s %zu runs, %d acquired, mean trial %.2f\n", arm.label.c_str(),
                    arm.runs.size(), acquired, mean_trial);
    }

    std::cout << "\nwrote " << trials_path.string() << ", " << forces_path.string() << ", "
              << acq_path.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- validate

bool validate_kernel() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int dim = 5, num_pairs = 30, num_stacks = 8, num_features = 512;
    Eigen::VectorXd ell(dim);
    for (int i = 0; i < dim; ++i) ell[i] = 0.4 + 1.2 * unit(rng);
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
    for (int p = 0; p < num_pairs; ++p) {
        Eigen::VectorXd a(dim), b(dim);
        for (int i = 0; i < dim; ++i) {
            a[i] = 2.0 * unit(rng) - 1.0;
            b[i] = 2.0 * unit(rng) - 1.0;
        }
        pairs.emplace_back(a, b);
    }
    double sq_sum = 0.0;
    for (const auto& [a, b] : pairs) {
        double estimate = 0.0;
        for (int s = 0; s < num_stacks; ++s) {
            const auto stack = build_stack(dim, num_features, ell, 100 + std::uint64_t(s));
            estimate += features(stack, a).dot(features(stack, b));
        }
        estimate /= num_stacks;
        const double exact =
            std::exp(-0.5 * ((a - b).array() / ell.array()).square().sum());
        sq_sum += (estimate - exact) * (estimate - exact);
    }
    const double rms = std::sqrt(sq_sum / num_pairs);
    std::printf("kernel oracle: rms error %.4f (limit 0.05)\n", rms);
    return rms <= 0.05;
}

bool validate_moment_matching() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int hits = 0;
    const int cases = 10;
    for (int c = 0; c < cases; ++c) {
        const int dim = 2 + int(unit(rng) * 2.0);  // 2 or 3 outputs, no controls
        TrainingDataset data(dim, dim);
        const int n = 20;
        data.inputs.resize(dim, n);
        data.targets.resize(dim, n);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < dim; ++d) {
                data.inputs(d, i) = 2.0 * unit(rng) - 1.0;
                data.targets(d, i) = std::sin(2.0 * data.inputs(d, i)) + 0.05 * gauss(rng);
            }
        Eigen::VectorXd ell = Eigen::VectorXd::Constant(dim, 0.8 + 0.8 * unit(rng));
        const auto stack = build_stack(dim, 16, ell, 500 + std::uint64_t(c));
        const auto model = fit(data, stack, Eigen::VectorXd::Constant(dim, 0.05 * 0.05),
                               Eigen::VectorXd::Constant(dim, 1.0));

        BeliefState belief;
        belief.mean.resize(dim);
        belief.var.resize(dim);
        for (int d = 0; d < dim; ++d) {
            belief.mean[d] = 1.5 * (2.0 * unit(rng) - 1.0);
            belief.var[d] = 0.04 * unit(rng);
        }
        belief.num_position = dim;
        const auto analytic = propagate(model, belief, Eigen::VectorXd());

        const int batches = 20, batch = 10000;
        Eigen::MatrixXd mean_est(dim, batches), var_est(dim, batches);
        for (int b = 0; b < batches; ++b) {
            Eigen::MatrixXd g(dim, batch);
            Eigen::MatrixXd noise_free_var = Eigen::MatrixXd::Zero(dim, batch);
            for (int s = 0; s < batch; ++s) {
                Eigen::VectorXd x(dim);
                for (int d = 0; d < dim; ++d)
                    x[d] = belief.mean[d] + std::sqrt(belief.var[d]) * gauss(rng);
                const auto [m, v] = predict(model, x);
                g.col(s) = m;
                noise_free_var.col(s) = v;
            }
            const Eigen::VectorXd mu = g.rowwise().mean();
            mean_est.col(b) = mu;
            const Eigen::VectorXd second =
                (g.colwise() - mu).array().square().rowwise().sum() / double(batch - 1);
            var_est.col(b) = noise_free_var.rowwise().mean() + second;
        }
        bool ok = true;
        for (int d = 0; d < dim; ++d) {
            const auto se = [&](const Eigen::MatrixXd& est) {
                const double mean = est.row(d).mean();
                const double sd = std::sqrt((est.row(d).array() - mean).square().sum() /
                                            double(batches - 1));
                return std::make_pair(mean, sd / std::sqrt(double(batches)));
            };
            const auto [m_mc, m_se] = se(mean_est);
            const auto [v_mc, v_se] = se(var_est);
            if (std::abs(analytic.mean[d] - m_mc) > 4.0 * m_se) ok = false;
            if (std::abs(analytic.var[d] - v_mc) > 4.0 * v_se) ok = false;
        }
        hits += ok ? 1 : 0;
    }
    std::printf("moment matching: %d/%d cases within 4 standard errors (need 8)\n", hits, cases);
    return hits >= 8;
}

bool validate_limits() {
    SafetyParams params;
    params.alpha_s = std::exp(6.0);
    params.alpha_t = std::exp(6.0);
    params.u_min_base = Eigen::VectorXd::Constant(2, -0.2);
    params.u_max_base = Eigen::VectorXd::Constant(2, 0.2);

    BeliefState certain;
    certain.mean = Eigen::VectorXd::Zero(6);
    certain.mean.segment(2, 2).setOnes();
    certain.mean.tail(2) << 0.3, -0.2;
    certain.var = Eigen::VectorXd::Zero(6);
    certain.num_position = 4;

    bool ok = k_s(params, certain, 100) == 1.0;
    ok = ok && k_t(params, certain, 100).norm() == 0.0;

    BeliefState stopped = certain;
    stopped.mean.tail(2).setZero();
    stopped.var.head(4).setConstant(0.5);
    ok = ok && k_t(params, stopped, 100).norm() == 0.0;

    SafetyParams off = params;
    off.alpha_s = 0.0;
    off.alpha_t = 0.0;
    BeliefState uncertain = certain;
    uncertain.var.setConstant(0.7);
    const auto box = limits(off, uncertain, 100);
    ok = ok && (box.first - params.u_min_base).norm() == 0.0 &&
         (box.second - params.u_max_base).norm() == 0.0;

    for (double v : {0.0, 1e-4, 0.01, 0.5, 10.0}) {
        BeliefState b = certain;
        b.var.head(4).setConstant(v);
        const double k = k_s(params, b, 100);
        ok = ok && k >= params.beta_s && k <= 1.0;
    }
    std::printf("limit functions: exact identities %s\n", ok ? "hold" : "VIOLATED");
    return ok;
}

int cmd_validate() {
    int failures = 0;
    const auto report = [&](const char* name, bool pass) {
        std::printf("%s: %s\n", pass ? "PASS" : "FAIL", name);
        failures += pass ? 0 : 1;
    };
    report("fastfood kernel oracle", validate_kernel());
    report("moment matching Monte Carlo oracle", validate_moment_matching());
    report("limit function identities", validate_limits());
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(version_string()) +
                 " - contact-safe model-based RL on a planar mixing task"};
    app.require_subcommand(1);

    RunOptions run_opt;
    auto* run = app.add_subcommand("run", "run one experiment per seed");
    run->add_option("--config", run_opt.config_path, "JSON config file (defaults when omitted)");
    run->add_option("--seeds", run_opt.seeds, "seed list, e.g. 0,3,10-19 (default 0)");
    run->add_option("--out", run_opt.out_root, "output root (default $SAFEMBRL_OUT or ./runs)");
    run->add_option("--jobs", run_opt.jobs, "parallel seed workers (default 1)");
    run->add_option("--mode", run_opt.mode_override, "baseline1 | baseline2 | safe")
        ->check(CLI::IsMember({"baseline1", "baseline2", "safe"}));
    run->add_option("--ln-alpha-s", run_opt.ln_alpha_s, "override ln(alpha_s)")->expected(1);
    run->add_option("--ln-alpha-t", run_opt.ln_alpha_t, "override ln(alpha_t)")->expected(1);

    std::vector<std::string> compare_dirs;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "compare run or sweep directories");
    compare->add_option("dirs", compare_dirs, "run directories or sweep roots")->required();
    compare->add_option("--out", compare_out, "directory for the .tsv tables (default .)");

    auto* validate = app.add_subcommand("validate", "run the numerical oracle suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_opt);
        if (compare->parsed()) return cmd_compare(compare_dirs, compare_out);
        if (validate->parsed()) return cmd_validate();
    } catch (const InvalidInputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
