// main.cpp — the ifmps command line tool. All the work happens in
// ifmps/cli.hpp; this file only maps flags onto run_from_files.

#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ifmps/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"influence-functional MPS simulator for the Ohmic spin-boson "
                 "model"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    long long seed = 0;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration file")->required();
    app.add_option("--out", out_dir, "output directory (created if missing)");
    CLI::Option* seed_opt =
        app.add_option("--seed", seed, "seed for the validation RNG");
    app.add_option("--override", overrides,
                   "config override as section.key=value (repeatable)");

    const char* commands[] = {"expsum", "plan", "simulate", "validate"};
    const char* blurbs[] = {
        "decompose the bath kernel into damped exponentials and certify it",
        "report truncation caps and state-space size for the configured run",
        "run the spin dynamics and write the trajectory table",
        "cross-check the numerics against independent oracles"};
    for (int i = 0; i < 4; ++i) {
        app.add_subcommand(commands[i], blurbs[i])->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (seed_opt->count() > 0) {
        if (seed < 0) {
            std::cerr << "config error: --seed must be >= 0\n";
            return 2;
        }
        overrides.push_back("validate.seed=" + std::to_string(seed));
    }

    const std::string command = app.get_subcommands().front()->get_name();
    return ifmps::run_from_files(config_path, command, out_dir, overrides);
}
