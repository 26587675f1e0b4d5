// End-to-end checks of the installed binary: argument handling, exit-code
// categories, output routing precedence, and seeded reproducibility.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string cli_path = QED_CLI_PATH;

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    const fs::path p = fs::temp_directory_path() /
                       ("qed_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Run the binary through the shell; returns the process exit code.
int run_cli(const std::string& args, const std::string& env_prefix = "") {
    std::string cmd;
    if (!env_prefix.empty()) cmd += env_prefix + " ";
    cmd += "'" + cli_path + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

const char* small_spectrum_config = R"({
    "truncation": {"n_c_max": 1, "n_p_max": 8},
    "experiment": {"type": "spectrum", "Ng_points": 5, "n_levels": 3}
})";

} // namespace

TEST_CASE("usage and argument errors exit with the config-error code", "[cli]") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("spectrum --help") == 0);
    CHECK(run_cli("") == 2);                                    // subcommand required
    CHECK(run_cli("teleport --config /dev/null") == 2);         // unknown subcommand
    CHECK(run_cli("spectrum") == 2);                            // --config required
    CHECK(run_cli("spectrum --config /no/such/file.json") == 2);
}

TEST_CASE("config content errors exit with the config-error code", "[cli]") {
    const fs::path dir = fresh_dir("badcfg");

    write_file(dir / "notjson.json", "{ this is not json");
    CHECK(run_cli("spectrum --config '" + (dir / "notjson.json").string() + "'") == 2);

    write_file(dir / "badxi.json",
               R"({"physical":{"xi":1.5},"experiment":{"type":"spectrum"}})");
    CHECK(run_cli("spectrum --config '" + (dir / "badxi.json").string() + "'") == 2);

    write_file(dir / "sp.json", small_spectrum_config);
    // Experiment type and subcommand must agree.
    CHECK(run_cli("maser --config '" + (dir / "sp.json").string() + "'") == 2);

    fs::remove_all(dir);
}

TEST_CASE("numeric failures exit with the numeric-error code", "[cli]") {
    const fs::path dir = fresh_dir("numeric");
    // No tunneling and no qubit decay: charge populations are conserved, so
    // the steady state is not unique and the solver must refuse.
    write_file(dir / "degenerate.json", R"({
        "physical": {"E_J_GHz": 0.0, "gamma_minus_GHz": 0.0},
        "truncation": {"n_c_max": 1, "n_p_max": 4},
        "experiment": {"type": "steady", "Ng_points": 1, "theta_points": 1}
    })");
    CHECK(run_cli("steady --config '" + (dir / "degenerate.json").string() + "' --out '" +
                  (dir / "out").string() + "'") == 3);
    fs::remove_all(dir);
}

TEST_CASE("unwritable output locations exit with the io-error code", "[cli]") {
    const fs::path dir = fresh_dir("iofail");
    write_file(dir / "sp.json", small_spectrum_config);
    write_file(dir / "blocker", "plain file, not a directory\n");
    // Output directory nested under a regular file cannot be created.
    const fs::path bad_out = dir / "blocker" / "out";
    CHECK(run_cli("spectrum --config '" + (dir / "sp.json").string() + "' --out '" +
                  bad_out.string() + "'") == 4);
    fs::remove_all(dir);
}

TEST_CASE("successful run writes tables, plots and manifest", "[cli]") {
    const fs::path dir = fresh_dir("run");
    write_file(dir / "sp.json", small_spectrum_config);
    const fs::path out = dir / "results";
    CHECK(run_cli("spectrum --config '" + (dir / "sp.json").string() + "' --out '" +
                  out.string() + "'") == 0);
    CHECK(fs::exists(out / "spectrum_levels.csv"));
    CHECK(fs::exists(out / "spectrum_levels.gp"));
    CHECK(fs::exists(out / "manifest.json"));

    const std::string csv = read_file(out / "spectrum_levels.csv");
    int rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows == 6); // header + 5 grid points
    fs::remove_all(dir);
}

TEST_CASE("output directory precedence: config < env var < flag", "[cli]") {
    const fs::path dir = fresh_dir("routing");
    const fs::path cfg_out = dir / "from_config";
    const fs::path env_out = dir / "from_env";
    const fs::path flag_out = dir / "from_flag";
    std::string cfg = small_spectrum_config;
    cfg.insert(cfg.rfind('}'), ", \"output_dir\": \"" + cfg_out.string() + "\"");
    write_file(dir / "sp.json", cfg);
    const std::string config_arg = "spectrum --config '" + (dir / "sp.json").string() + "'";

    SECTION("config value applies when nothing overrides it") {
        CHECK(run_cli(config_arg) == 0);
        CHECK(fs::exists(cfg_out / "manifest.json"));
    }

    SECTION("environment variable overrides the config value") {
        CHECK(run_cli(config_arg, "QED_NONLIN_OUT='" + env_out.string() + "'") == 0);
        CHECK(fs::exists(env_out / "manifest.json"));
        CHECK_FALSE(fs::exists(cfg_out));
    }

    SECTION("--out flag overrides both") {
        CHECK(run_cli(config_arg + " --out '" + flag_out.string() + "'",
                      "QED_NONLIN_OUT='" + env_out.string() + "'") == 0);
        CHECK(fs::exists(flag_out / "manifest.json"));
        CHECK_FALSE(fs::exists(env_out));
        CHECK_FALSE(fs::exists(cfg_out));
    }

    fs::remove_all(dir);
}

TEST_CASE("seed flag selects the trajectory stream", "[cli]") {
    const fs::path dir = fresh_dir("seed");
    write_file(dir / "mc.json", R"({
        "truncation": {"n_c_max": 1, "n_p_max": 6},
        "experiment": {"type": "mcwf", "n_traj": 2, "t_end_ns": 2.0,
                        "sample_dt_ns": 0.5, "initial": "excited", "n_record": 0}
    })");
    const std::string base = "mcwf --config '" + (dir / "mc.json").string() + "'";
    const fs::path o1 = dir / "s1";
    const fs::path o2 = dir / "s1_again";
    const fs::path o3 = dir / "s2";
    REQUIRE(run_cli(base + " --out '" + o1.string() + "' --seed 1") == 0);
    REQUIRE(run_cli(base + " --out '" + o2.string() + "' --seed 1") == 0);
    REQUIRE(run_cli(base + " --out '" + o3.string() + "' --seed 2") == 0);

    CHECK(read_file(o1 / "mcwf_ensemble.csv") == read_file(o2 / "mcwf_ensemble.csv"));
    CHECK(read_file(o1 / "mcwf_ensemble.csv") != read_file(o3 / "mcwf_ensemble.csv"));
    fs::remove_all(dir);
}
