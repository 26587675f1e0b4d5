// qed-nonlin: command-line driver for the charge-qubit/resonator experiments.
//
//   qed-nonlin <subcommand> --config <file> [--out <dir>] [--seed <n>]
//
// Subcommands: spectrum | maser | steady | mcwf | squeeze. The config's
// experiment type must match the subcommand. Output directory precedence:
// config value < QED_NONLIN_OUT environment variable < --out flag.
// Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 I/O error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "qed/qed.hpp"

namespace {

struct CliArgs {
    std::string subcommand;
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
};

const char* experiment_type_name(const qed::Experiment& e) {
    if (std::holds_alternative<qed::SpectrumExperiment>(e)) return "spectrum";
    if (std::holds_alternative<qed::MaserExperiment>(e)) return "maser";
    if (std::holds_alternative<qed::SteadyExperiment>(e)) return "steady";
    if (std::holds_alternative<qed::McwfExperiment>(e)) return "mcwf";
    return "squeeze";
}

int run_cli(const CliArgs& args) {
    qed::RunConfig rc = qed::load_config(args.config_path);

    const std::string cfg_type = experiment_type_name(rc.experiment);
    if (cfg_type != args.subcommand)
        throw qed::ConfigError("config experiment type \"" + cfg_type +
                               "\" does not match subcommand \"" + args.subcommand + "\"");

    if (const char* env = std::getenv("QED_NONLIN_OUT"); env && *env) rc.output_dir = env;
    if (args.out_dir) rc.output_dir = *args.out_dir;
    if (args.seed) {
        if (auto* mc = std::get_if<qed::McwfExperiment>(&rc.experiment)) mc->seed0 = *args.seed;
    }

    const qed::RunArtifacts art = qed::run(rc);
    std::cout << "wrote " << art.files.size() << " output file(s) and "
              << art.manifest_path.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"charge-qubit/resonator circuit simulations", "qed-nonlin"};
    app.require_subcommand(1);

    CliArgs args;
    for (const char* name : {"spectrum", "maser", "steady", "mcwf", "squeeze"}) {
        CLI::App* sub = app.add_subcommand(name, std::string(name) + " experiment");
        sub->add_option("--config", args.config_path, "JSON config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", "output directory (overrides config and QED_NONLIN_OUT)");
        sub->add_option("--seed", "RNG seed override (mcwf only)");
        sub->callback([&args, sub, name]() {
            args.subcommand = name;
            if (sub->count("--out")) args.out_dir = sub->get_option("--out")->as<std::string>();
            if (sub->count("--seed"))
                args.seed = sub->get_option("--seed")->as<std::uint64_t>();
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage problems are configuration errors
    }

    try {
        return run_cli(args);
    } catch (const qed::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(qed::ExitCode::numeric_error);
    }
}
