#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "beamtomo/cli.hpp"
#include "beamtomo/common.hpp"

int main(int argc, char** argv) {
    CLI::App app{"beamtomo: Gaussian-beam probes and light-ray tomography experiments"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (BEAMTOMO_THREADS overrides)")->check(CLI::NonNegativeNumber);

    std::string config, out;
    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config, "JSON config file")->required();
    run->add_option("--out", out, "artifact directory (overrides the config's output)");

    std::string kind;
    auto* describe = app.add_subcommand("describe", "print the keys of a kind and an example config");
    describe->add_option("kind", kind, "experiment kind")->required();

    auto* selftest = app.add_subcommand("selftest", "run the closed-form checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : beamtomo::cli::kConfigError;
    }
    if (threads > 0) beamtomo::set_threads(threads);

    if (*run) return beamtomo::cli::run(config, out, std::cerr);
    if (*describe) return beamtomo::cli::describe(kind, std::cout);
    if (*selftest) return beamtomo::cli::selftest(std::cout);
    return beamtomo::cli::kConfigError;
}
