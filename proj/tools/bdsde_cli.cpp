#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "bdsde/cli.hpp"
#include "bdsde/error.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo convergence studies for backward doubly stochastic equations"};
    app.set_version_flag("--version", bdsde::version_string());
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run the study described by a config file");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--seed", seed, "Override run.seed");
    run->add_option("--out", out, "Override output.out_path");
    run->add_option("--threads", threads, "Override run.threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        bdsde::RunConfig cfg = bdsde::load_config(config_path);
        if (seed) bdsde::set_config_value(cfg, "run.seed", std::to_string(*seed));
        if (out) bdsde::set_config_value(cfg, "output.out_path", *out);
        if (threads) bdsde::set_config_value(cfg, "run.threads", std::to_string(*threads));
        return bdsde::run(cfg, std::cerr);
    } catch (const bdsde::Error& e) {
        std::cerr << "error (" << bdsde::to_string(e.kind()) << "): " << e.what() << '\n';
        return bdsde::exit_status(e);
    }
}
