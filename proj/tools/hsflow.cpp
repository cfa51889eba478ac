#include "hsflow/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Hele-Shaw moving-mesh finite element simulator"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    bool quiet = false;
    auto add = [&](const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (default: output_dir from the config)");
        sub->add_flag("--quiet", quiet, "only print errors");
        return sub;
    };
    CLI::App* run = add("run", "run a simulation and write snapshots, diagnostics and plots");
    CLI::App* verify = add("verify", "run a built-in experiment and check it against the predicted rates");
    CLI::App* bench = add("bench", "time the schemes on a common experiment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : hsflow::exit_config;
    }

    try {
        if (*run) return hsflow::cmd_run(config, out, quiet, std::cout, std::cerr);
        if (*verify) return hsflow::cmd_verify(config, out, quiet, std::cout, std::cerr);
        if (*bench) return hsflow::cmd_bench(config, out, quiet, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
