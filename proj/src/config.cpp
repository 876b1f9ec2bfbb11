#include "safembrl/config.hpp"

#include "safembrl/errors.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

namespace safembrl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_known_fields(const json& section, const std::string& name,
                        std::initializer_list<const char*> allowed) {
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, value] : section.items())
        if (!known.count(key))
            throw InvalidInputError("unknown field: " + name + "." + key);
}

template <typename T>
void read_field(const json& section, const std::string& name, const char* key, T& out) {
    if (!section.contains(key)) return;
    try {
        section.at(key).get_to(out);
    } catch (const json::exception&) {
        throw InvalidInputError("bad value for " + name + "." + key);
    }
}

void read_vector(const json& section, const std::string& name, const char* key,
                 Eigen::VectorXd& out, Eigen::Index required_size) {
    if (!section.contains(key)) return;
    std::vector<double> values;
    try {
        section.at(key).get_to(values);
    } catch (const json::exception&) {
        throw InvalidInputError("bad value for " + name + "." + key);
    }
    if (required_size >= 0 && Eigen::Index(values.size()) != required_size)
        throw InvalidInputError(name + "." + key + " must have " +
                                std::to_string(required_size) + " entries");
    out = Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw InvalidInputError("config root must be a JSON object");
    check_known_fields(j, "config", {"experiment", "arm", "safety", "solver", "model"});

    ExperimentConfig cfg = default_experiment_config();

    if (j.contains("experiment")) {
        const auto& sec = j.at("experiment");
        check_known_fields(sec, "experiment",
                           {"num_trials", "steps_per_trial", "selection_period", "mode",
                            "ln_alpha_s", "ln_alpha_t", "seed", "weight_position",
                            "weight_orientation", "initial_noise_std", "initial_signal_std"});
        read_field(sec, "experiment", "num_trials", cfg.num_trials);
        read_field(sec, "experiment", "steps_per_trial", cfg.steps_per_trial);
        read_field(sec, "experiment", "selection_period", cfg.selection_period);
        if (sec.contains("mode")) {
            std::string mode;
            read_field(sec, "experiment", "mode", mode);
            try {
                cfg.mode = mode_from_name(mode);
            } catch (const InvalidInputError& e) {
                throw InvalidInputError("experiment.mode: " + std::string(e.what()));
            }
        }
        read_field(sec, "experiment", "ln_alpha_s", cfg.ln_alpha_s);
        read_field(sec, "experiment", "ln_alpha_t", cfg.ln_alpha_t);
        read_field(sec, "experiment", "seed", cfg.seed);
        read_field(sec, "experiment", "weight_position", cfg.weight_position);
        read_field(sec, "experiment", "weight_orientation", cfg.weight_orientation);
        read_field(sec, "experiment", "initial_noise_std", cfg.initial_noise_std);
        read_field(sec, "experiment", "initial_signal_std", cfg.initial_signal_std);
    }

    if (j.contains("arm")) {
        const auto& sec = j.at("arm");
        check_known_fields(sec, "arm",
                           {"link1", "link2", "stick_length", "bowl_center", "bowl_diameter",
                            "contact_stiffness", "contact_damping", "drag_coefficient",
                            "yield_force", "yield_speed", "force_velocity_gain", "dt",
                            "max_joint_speed", "process_noise_std"});
        read_field(sec, "arm", "link1", cfg.arm.link1);
        read_field(sec, "arm", "link2", cfg.arm.link2);
        read_field(sec, "arm", "stick_length", cfg.arm.stick_length);
        if (sec.contains("bowl_center")) {
            Eigen::VectorXd center;
            read_vector(sec, "arm", "bowl_center", center, 2);
            cfg.arm.bowl_center = center;
        }
        read_field(sec, "arm", "bowl_diameter", cfg.arm.bowl_diameter);
        read_field(sec, "arm", "contact_stiffness", cfg.arm.contact_stiffness);
        read_field(sec, "arm", "contact_damping", cfg.arm.contact_damping);
        read_field(sec, "arm", "drag_coefficient", cfg.arm.drag_coefficient);
        read_field(sec, "arm", "yield_force", cfg.arm.yield_force);
        read_field(sec, "arm", "yield_speed", cfg.arm.yield_speed);
        read_field(sec, "arm", "force_velocity_gain", cfg.arm.force_velocity_gain);
        read_field(sec, "arm", "dt", cfg.arm.dt);
        read_field(sec, "arm", "max_joint_speed", cfg.arm.max_joint_speed);
        read_field(sec, "arm", "process_noise_std", cfg.arm.process_noise_std);
    }

    if (j.contains("safety")) {
        const auto& sec = j.at("safety");
        check_known_fields(sec, "safety", {"beta_s", "gamma_t", "u_min", "u_max"});
        read_field(sec, "safety", "beta_s", cfg.safety.beta_s);
        read_field(sec, "safety", "gamma_t", cfg.safety.gamma_t);
        if (sec.contains("u_min") != sec.contains("u_max"))
            throw InvalidInputError(std::string("missing required field: safety.") +
                                    (sec.contains("u_min") ? "u_max" : "u_min"));
        read_vector(sec, "safety", "u_min", cfg.safety.u_min_base, 2);
        read_vector(sec, "safety", "u_max", cfg.safety.u_max_base, 2);
    }

    if (j.contains("solver")) {
        const auto& sec = j.at("solver");
        check_known_fields(sec, "solver", {"population", "elites", "iterations", "horizon"});
        read_field(sec, "solver", "population", cfg.solver.population);
        read_field(sec, "solver", "elites", cfg.solver.elites);
        read_field(sec, "solver", "iterations", cfg.solver.iterations);
        read_field(sec, "solver", "horizon", cfg.solver.horizon);
    }

    if (j.contains("model")) {
        const auto& sec = j.at("model");
        check_known_fields(sec, "model",
                           {"num_features", "base_lengthscales", "noise_std_grid",
                            "position_noise_std_grid", "signal_std_grid",
                            "position_signal_std_grid", "lengthscale_scale_grid"});
        read_field(sec, "model", "num_features", cfg.hyper.num_features);
        read_vector(sec, "model", "base_lengthscales", cfg.hyper.base_lengthscales, 8);
        read_field(sec, "model", "noise_std_grid", cfg.hyper.noise_std);
        auto read_position_grid = [&](const char* field, const std::vector<double>& shared,
                                      std::vector<std::vector<double>>& per_dim) {
            if (sec.contains(field)) {
                std::vector<double> pos_grid;
                read_field(sec, "model", field, pos_grid);
                per_dim.assign(4, pos_grid);
                per_dim.resize(6, shared);
            } else {
                per_dim.clear();
            }
        };
        read_position_grid("position_noise_std_grid", cfg.hyper.noise_std,
                           cfg.hyper.noise_std_per_dim);
        read_field(sec, "model", "signal_std_grid", cfg.hyper.signal_std);
        read_position_grid("position_signal_std_grid", cfg.hyper.signal_std,
                           cfg.hyper.signal_std_per_dim);
        read_field(sec, "model", "lengthscale_scale_grid", cfg.hyper.lengthscale_scale);
    }

    cfg.validate();
    return cfg;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    auto& exp = j["experiment"];
    exp["num_trials"] = cfg.num_trials;
    exp["steps_per_trial"] = cfg.steps_per_trial;
    exp["selection_period"] = cfg.selection_period;
    exp["mode"] = mode_name(cfg.mode);
    exp["ln_alpha_s"] = cfg.ln_alpha_s;
    exp["ln_alpha_t"] = cfg.ln_alpha_t;
    exp["seed"] = cfg.seed;
    exp["weight_position"] = cfg.weight_position;
    exp["weight_orientation"] = cfg.weight_orientation;
    exp["initial_noise_std"] = cfg.initial_noise_std;
    exp["initial_signal_std"] = cfg.initial_signal_std;

    auto& arm = j["arm"];
    arm["link1"] = cfg.arm.link1;
    arm["link2"] = cfg.arm.link2;
    arm["stick_length"] = cfg.arm.stick_length;
    arm["bowl_center"] = std::vector<double>{cfg.arm.bowl_center[0], cfg.arm.bowl_center[1]};
    arm["bowl_diameter"] = cfg.arm.bowl_diameter;
    arm["contact_stiffness"] = cfg.arm.contact_stiffness;
    arm["contact_damping"] = cfg.arm.contact_damping;
    arm["drag_coefficient"] = cfg.arm.drag_coefficient;
    arm["yield_force"] = cfg.arm.yield_force;
    arm["yield_speed"] = cfg.arm.yield_speed;
    arm["force_velocity_gain"] = cfg.arm.force_velocity_gain;
    arm["dt"] = cfg.arm.dt;
    arm["max_joint_speed"] = cfg.arm.max_joint_speed;
    arm["process_noise_std"] = cfg.arm.process_noise_std;

    auto& safety = j["safety"];
    safety["beta_s"] = cfg.safety.beta_s;
    safety["gamma_t"] = cfg.safety.gamma_t;
    safety["u_min"] = to_std(cfg.safety.u_min_base);
    safety["u_max"] = to_std(cfg.safety.u_max_base);

    auto& solver = j["solver"];
    solver["population"] = cfg.solver.population;
    solver["elites"] = cfg.solver.elites;
    solver["iterations"] = cfg.solver.iterations;
    solver["horizon"] = cfg.solver.horizon;

    auto& model = j["model"];
    model["num_features"] = cfg.hyper.num_features;
    model["base_lengthscales"] = to_std(cfg.hyper.base_lengthscales);
    model["noise_std_grid"] = cfg.hyper.noise_std;
    if (!cfg.hyper.noise_std_per_dim.empty())
        model["position_noise_std_grid"] = cfg.hyper.noise_std_per_dim.front();
    model["signal_std_grid"] = cfg.hyper.signal_std;
    if (!cfg.hyper.signal_std_per_dim.empty())
        model["position_signal_std_grid"] = cfg.hyper.signal_std_per_dim.front();
    model["lengthscale_scale_grid"] = cfg.hyper.lengthscale_scale;
    return j;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInputError("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config_file(const ExperimentConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << config_to_json(config).dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) {
        if (token.empty()) throw InvalidInputError("empty seed token in: " + text);
        const auto dash = token.find('-');
        std::uint64_t lo = 0, hi = 0;
        try {
            if (dash == std::string::npos) {
                lo = hi = std::stoull(token);
            } else {
                lo = std::stoull(token.substr(0, dash));
                hi = std::stoull(token.substr(dash + 1));
            }
        } catch (const std::logic_error&) {
            throw InvalidInputError("bad seed token: " + token);
        }
        if (hi < lo) throw InvalidInputError("descending seed range: " + token);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw InvalidInputError("no seeds given");
    return seeds;
}

void RunManifest::write(const std::filesystem::path& path) const {
    ordered_json j;
    j["run_id"] = run_id;
    j["version"] = version;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["config"] = config;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("manifest parse error in " + path.string() + ": " + e.what());
    }
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.out_dir = j.at("out_dir").get<std::string>();
    m.config = j.at("config");
    return m;
}

const char* version_string() { return "safembrl 1.0.0"; }

}  // namespace safembrl
