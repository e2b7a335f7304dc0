#pragma once

#include "emtbo/baselines.hpp"
#include "emtbo/bo_loop.hpp"
#include "emtbo/exceedance.hpp"
#include "emtbo/objectives.hpp"
#include "emtbo/report.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace emtbo {

enum class StudyKind { BoGrid, BoContinuous, BaselineSuite, Exceedance, MonteCarlo, ImpedanceScan };

std::string_view to_string(StudyKind kind) noexcept;
StudyKind study_kind_from_string(std::string_view name);

struct GridFileSource {
    std::filesystem::path path;
};

// A study objective: lookup table (file or generated fixture) or the
// energization simulator.
struct ObjectiveSpec {
    std::variant<GridFileSource, SyntheticRiskSpec, EnergizationProblem> source;

    [[nodiscard]] bool is_grid() const noexcept { return !std::holds_alternative<EnergizationProblem>(source); }
};

struct OracleSpec {
    enum class Kind { None, Value, DenseSweep, GridOptimum };
    Kind kind = Kind::None;
    double value = 0.0;
    int points = 1000;
    // Continuous runs count as converged when their gap is at most this.
    double tolerance_percent = 0.1;
};

struct MethodSpec {
    std::string method;  // bo, random, nelder-mead, dual-annealing
    std::optional<Eigen::VectorXd> start;  // natural coordinates, nelder-mead only
    std::string label;
};

struct ExceedanceSpec {
    ExceedanceStudy study;
    // When set, the threshold is the given quantile of the oracle sample.
    std::optional<double> threshold_quantile;
    long oracle_samples = 7000;
    int bins = 40;
};

struct MonteCarloSpec {
    long samples = 7000;
    double threshold_kv = 750.0;
    int bins = 40;
};

struct ImpedanceSpec {
    double fmin = 20.0;
    double fmax = 300.0;
    int points = 200;
    bool simulate = false;
    double timestep = 10e-6;
};

struct StudySpec {
    std::string id = "study";
    StudyKind kind = StudyKind::BoGrid;
    std::uint64_t seed = 0;
    ObjectiveSpec objective;
    Sense sense = Sense::Minimize;
    double output_divisor = 1.0;
    BoConfig bo;
    int restarts = 1;
    long budget = 25;
    std::vector<MethodSpec> methods;
    OracleSpec oracle;
    ExceedanceSpec exceedance;
    MonteCarloSpec monte_carlo;
    ImpedanceSpec impedance;
    nlohmann::json echo;
};

/// Parses and validates a study document. Every failure is
/// Error(config_error) whose message starts with the offending field path.
StudySpec parse_study(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
StudySpec load_study(const std::filesystem::path& file);

// Replaces the root seed everywhere it was copied during parsing.
void override_seed(StudySpec& spec, std::uint64_t seed);

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;  // nothing written when unset
    unsigned jobs = 1;
};

struct StudyReport {
    std::string id;
    StudyKind kind = StudyKind::BoGrid;
    nlohmann::json summary;
    std::vector<std::filesystem::path> manifest;
};

/// Executes the study and writes its CSVs plus summary.json into out_dir.
StudyReport run_study(const StudySpec& spec, const RunOptions& options = {});

/// Oracle optimum in natural units, or Error(config_error) when none is available.
double resolve_oracle(const StudySpec& spec, unsigned jobs = 1);

/// One row per configured method (BO alone when no methods are listed).
std::vector<ComparisonRow> compare_methods(const StudySpec& spec, const RunOptions& options = {});

/// Analytic (and optionally simulated) impedance on a linear frequency grid.
std::vector<ImpedanceRow> impedance_scan(const emt::CircuitParams& circuit, const ImpedanceSpec& spec,
                                         unsigned jobs = 1);

}  // namespace emtbo
