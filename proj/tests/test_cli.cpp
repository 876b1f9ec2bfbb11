// End-to-end checks of the command-line binary (path injected by CMake).
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cmd(const std::string& args) {
    const fs::path capture = fs::temp_directory_path() / "safembrl_cli_capture.txt";
    const std::string cmd = std::string(SAFEMBRL_BIN) + " " + args + " > " +
                            capture.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = (raw == -1) ? -1 : WEXITSTATUS(raw);
    std::ifstream in(capture);
    std::stringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    fs::remove(capture);
    return r;
}

fs::path write_small_config() {
    const fs::path path = fs::temp_directory_path() / "safembrl_cli_config.json";
    std::ofstream out(path);
    out << R"({
      "experiment": {"num_trials": 2, "steps_per_trial": 10},
      "solver": {"population": 16, "elites": 3, "iterations": 2},
      "model": {"num_features": 33}
    })";
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Planning wall time is the one legitimately nondeterministic logged value.
std::string strip_wall_ms(std::string text) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto hit = text.find("\"plan_wall_ms\":", pos);
        if (hit == std::string::npos) {
            out += text.substr(pos);
            return out;
        }
        out += text.substr(pos, hit - pos);
        pos = text.find(',', hit) + 1;
    }
}

}  // namespace

TEST_CASE("misnamed config fields abort with exit code 2 and name the field") {
    const fs::path bad = fs::temp_directory_path() / "safembrl_cli_bad.json";
    std::ofstream(bad) << R"({"experiment": {"num_trails": 3}})";
    const auto r = run_cmd("run --config " + bad.string() + " --seeds 0 --out /tmp/unused_cli");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("experiment.num_trails") != std::string::npos);
    fs::remove(bad);
}

TEST_CASE("a config plus seed reproduces the run byte for byte") {
    const auto config = write_small_config();
    const fs::path out_a = fs::temp_directory_path() / "safembrl_cli_run_a";
    const fs::path out_b = fs::temp_directory_path() / "safembrl_cli_run_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    const std::string base = "run --config " + config.string() + " --mode safe --seeds 3 --out ";
    REQUIRE(run_cmd(base + out_a.string()).exit_code == 0);
    REQUIRE(run_cmd(base + out_b.string()).exit_code == 0);

    CHECK(slurp(out_a / "safe_seed3" / "summary.log") ==
          slurp(out_b / "safe_seed3" / "summary.log"));
    for (const char* name : {"trial_1.log", "trial_2.log"}) {
        const auto a = strip_wall_ms(slurp(out_a / "safe_seed3" / name));
        REQUIRE(!a.empty());
        CHECK(a == strip_wall_ms(slurp(out_b / "safe_seed3" / name)));
    }

    SUBCASE("comparing a run against itself reports no difference") {
        const fs::path tsv_dir = fs::temp_directory_path() / "safembrl_cli_tsv";
        fs::remove_all(tsv_dir);
        fs::create_directories(tsv_dir);
        const auto r = run_cmd("compare " + (out_a / "safe_seed3").string() + " " +
                               (out_b / "safe_seed3").string() + " --out " + tsv_dir.string());
        CHECK(r.exit_code == 0);
        CHECK(fs::exists(tsv_dir / "compare_trials.tsv"));
        CHECK(fs::exists(tsv_dir / "compare_forces.tsv"));
        // Identical runs: the per-arm acquisition rows must agree after the label.
        std::ifstream in(tsv_dir / "compare_acquisition.tsv");
        std::string header, row_a, row_b;
        REQUIRE(std::getline(in, header));
        REQUIRE(std::getline(in, row_a));
        REQUIRE(std::getline(in, row_b));
        CHECK(row_a.substr(row_a.find('\t')) == row_b.substr(row_b.find('\t')));
        // And every top-k% force reduction column in the force table is zero.
        CHECK(r.output.find("reduction:   0.00%") != std::string::npos);
        fs::remove_all(tsv_dir);
    }

    fs::remove_all(out_a);
    fs::remove_all(out_b);
    fs::remove(config);
}

TEST_CASE("bad command lines fail without touching the filesystem") {
    CHECK(run_cmd("").exit_code != 0);
    CHECK(run_cmd("run --mode fearless").exit_code != 0);
    CHECK(run_cmd("run --seeds 9-3 --out /tmp/unused_cli2").exit_code == 2);
    CHECK(run_cmd("compare /nonexistent_dir_xyz").exit_code != 0);
}
