// Command-line front end: run studies, compare optimizers, scan impedance.
#include "emtbo/error.hpp"
#include "emtbo/study.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int exit_validation = 2;
constexpr int exit_runtime = 3;

struct Common {
    std::string config;
    unsigned jobs = 1;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("config", c.config, "study config (JSON)")->required();
    cmd->add_option("--jobs,-j", c.jobs, "worker threads for restarts and Monte Carlo")->check(CLI::PositiveNumber);
    cmd->add_option("--out,-o", c.out, "output directory");
    cmd->add_option("--seed,-s", c.seed, "override the config seed");
}

emtbo::RunOptions run_options(const Common& c) {
    emtbo::RunOptions o;
    o.jobs = c.jobs;
    if (!c.out.empty()) {
        o.out_dir = c.out;
    }
    return o;
}

// Loading and validation failures exit 2; anything after that exits 3.
template <typename Body>
int guarded(const Common& c, Body&& body) {
    emtbo::StudySpec spec;
    try {
        spec = emtbo::load_study(c.config);
        if (c.seed) {
            emtbo::override_seed(spec, *c.seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "emtbo: " << e.what() << '\n';
        return exit_validation;
    }
    try {
        body(spec);
    } catch (const emtbo::Error& e) {
        std::cerr << "emtbo: " << e.what() << '\n';
        return e.code() == emtbo::Errc::config_error ? exit_validation : exit_runtime;
    } catch (const std::exception& e) {
        std::cerr << "emtbo: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian optimization studies on transformer energization transients"};
    app.require_subcommand(1);

    Common run_args;
    auto* run = app.add_subcommand("run", "execute a study and write traces and summary.json");
    add_common(run, run_args);

    Common cmp_args;
    auto* cmp = app.add_subcommand("compare", "print the method comparison table");
    add_common(cmp, cmp_args);

    emtbo::ImpedanceSpec imp;
    std::string imp_out;
    auto* impedance = app.add_subcommand("impedance", "input impedance magnitude over frequency");
    impedance->add_option("--fmin", imp.fmin, "lowest frequency [Hz]")->check(CLI::PositiveNumber);
    impedance->add_option("--fmax", imp.fmax, "highest frequency [Hz]")->check(CLI::PositiveNumber);
    impedance->add_option("--points", imp.points, "number of frequencies")->check(CLI::PositiveNumber);
    impedance->add_flag("--simulate", imp.simulate, "also measure in the time domain");
    impedance->add_option("--out,-o", imp_out, "write CSV here instead of stdout");

    std::string fixture_out;
    auto* fixture = app.add_subcommand("fixture", "write the synthetic 9x20 risk table");
    fixture->add_option("--out,-o", fixture_out, "CSV path (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_validation;
    }

    if (*run) {
        return guarded(run_args, [&](const emtbo::StudySpec& spec) {
            auto report = emtbo::run_study(spec, run_options(run_args));
            report.summary.erase("config");
            std::cout << report.summary.dump(2) << '\n';
        });
    }
    if (*cmp) {
        return guarded(cmp_args, [&](const emtbo::StudySpec& spec) {
            emtbo::write_comparison_csv(std::cout, emtbo::compare_methods(spec, run_options(cmp_args)));
        });
    }
    try {
        if (*impedance) {
            if (imp.fmax < imp.fmin) {
                std::cerr << "emtbo: --fmax must not be below --fmin\n";
                return exit_validation;
            }
            const auto rows = emtbo::impedance_scan(emtbo::emt::CircuitParams::defaults(), imp);
            if (imp_out.empty()) {
                emtbo::write_impedance_csv(std::cout, rows);
            } else {
                std::ofstream os(imp_out);
                emtbo::write_impedance_csv(os, rows);
                if (!os) {
                    throw emtbo::Error(emtbo::Errc::io_error, "cannot write " + imp_out);
                }
            }
        } else if (*fixture) {
            const auto grid = emtbo::make_synthetic_risk_grid();
            if (fixture_out.empty()) {
                grid.write_csv(std::cout);
            } else {
                std::ofstream os(fixture_out);
                grid.write_csv(os);
                if (!os) {
                    throw emtbo::Error(emtbo::Errc::io_error, "cannot write " + fixture_out);
                }
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "emtbo: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
