#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hlsd/hlsd.hpp"

namespace {

constexpr int exit_parse = 2;
constexpr int exit_numeric = 3;
constexpr int exit_io = 4;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Batch driver for the localized spectral decomposition solver"};
    std::string config;
    std::string out = "out";
    std::string experiment;
    int threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("-c,--config", config, "JSON config file")->required()->envname("HLSD_CONFIG");
    app.add_option("-o,--out", out, "output directory")->envname("HLSD_OUT");
    app.add_option("-t,--threads", threads, "worker threads (1 is the determinism reference)")
        ->envname("HLSD_THREADS")
        ->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("-s,--seed", seed, "seed for randomized loads")->envname("HLSD_SEED");
    app.add_option("-e,--experiment", experiment,
                   "solve | decay | j_sweep | contrast_sweep | h_convergence | rhs_reduction")
        ->envname("HLSD_EXPERIMENT");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : exit_parse;
    }
    seed_set = seed_opt->count() > 0;

    hlsd::ExperimentSpec spec;
    try {
        spec = hlsd::load_experiment(config);
        if (!experiment.empty())
            spec.kind = hlsd::parse_experiment_kind(experiment);
        if (threads > 0)
            spec.base.threads = threads;
        if (seed_set)
            spec.seed = seed;
        spec.out_dir = out;
    } catch (const hlsd::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == hlsd::ErrorKind::io ? exit_io : exit_parse;
    } catch (const std::exception& e) {
        std::cerr << "error: " << config << ": " << e.what() << '\n';
        return exit_parse;
    }

    try {
        const hlsd::ExperimentResult r = hlsd::run_experiment(spec);
        std::cout << hlsd::to_string(spec.kind) << ": wrote";
        for (const auto& f : r.files)
            std::cout << ' ' << f;
        std::cout << " to " << spec.out_dir << '\n';
    } catch (const hlsd::Error& e) {
        std::cerr << "error [" << (e.stage().empty() ? "run" : e.stage()) << "] " << hlsd::to_string(e.kind())
                  << ": " << e.what() << '\n';
        return e.kind() == hlsd::ErrorKind::io ? exit_io
               : e.kind() == hlsd::ErrorKind::parse ? exit_parse
                                                     : exit_numeric;
    }
    return 0;
}
