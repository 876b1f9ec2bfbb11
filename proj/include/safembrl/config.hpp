#pragma once

#include "safembrl/mbrl_loop.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace safembrl {

// Structured config I/O. Every field defaults to the published experiment
// setting, so "{}" is a complete config; unknown or mistyped fields are
// rejected by name so typos cannot silently fall back to defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config_file(const std::filesystem::path& path);
void save_config_file(const ExperimentConfig& config, const std::filesystem::path& path);

// "3,7,10-12" -> {3, 7, 10, 11, 12}
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct RunManifest {
    std::string run_id;
    std::string version;
    std::uint64_t seed = 0;
    std::string out_dir;
    nlohmann::ordered_json config;  // byte-exact re-loadable snapshot

    void write(const std::filesystem::path& path) const;
    static RunManifest read(const std::filesystem::path& path);
};

const char* version_string();

}  // namespace safembrl
