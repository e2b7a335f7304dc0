#pragma once

#include "emtbo/acquisition.hpp"
#include "emtbo/gp.hpp"
#include "emtbo/hyper_inference.hpp"
#include "emtbo/objectives.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace emtbo {

struct GridDomain {
    std::vector<std::vector<double>> axes;  // each strictly increasing
};

struct BoxDomain {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

// Search domain in natural coordinates. Points handed to the surrogate are
// mapped to the unit box (grid axes by their ranges).
class Domain {
public:
    static Domain grid(std::vector<std::vector<double>> axes);
    static Domain box(Eigen::VectorXd lower, Eigen::VectorXd upper);

    [[nodiscard]] bool is_grid() const noexcept { return std::holds_alternative<GridDomain>(repr_); }
    [[nodiscard]] Eigen::Index dimension() const noexcept;
    [[nodiscard]] Eigen::VectorXd lower() const;
    [[nodiscard]] Eigen::VectorXd upper() const;

    // Grid only. Linear index is row-major: the last axis varies fastest.
    [[nodiscard]] std::size_t grid_size() const;
    [[nodiscard]] Eigen::VectorXd grid_point(std::size_t linear_index) const;
    [[nodiscard]] const GridDomain& as_grid() const { return std::get<GridDomain>(repr_); }

    [[nodiscard]] Eigen::VectorXd to_unit(const Eigen::Ref<const Eigen::VectorXd>& natural) const;
    [[nodiscard]] Eigen::VectorXd from_unit(const Eigen::Ref<const Eigen::VectorXd>& unit) const;

private:
    std::variant<GridDomain, BoxDomain> repr_;
};

struct Design {
    std::vector<Eigen::VectorXd> points;     // natural coordinates
    std::vector<std::size_t> grid_indices;   // grid domains only
};

/// Uniform random design; grid draws are without replacement.
Design initial_design(const Domain& domain, std::size_t n, std::uint64_t seed);

// Acquisition value at a unit-box point.
using AcquisitionScorer = std::function<double(const Eigen::VectorXd&)>;

struct BoxSearchOptions {
    int probe_count = 1000;
    int local_starts = 10;
    double initial_step = 0.05;  // unit-box units
    double min_step = 1e-7;
};

struct Selection {
    Eigen::VectorXd unit;
    Eigen::VectorXd natural;
    std::optional<std::size_t> grid_index;
    double value = 0.0;
};

// Points already evaluated; grid runs track linear indices, box runs unit points.
struct Visited {
    std::vector<std::size_t> grid_indices;
    std::vector<Eigen::VectorXd> unit_points;
};

/// Grid: exact argmax over unvisited nodes (lowest linear index wins ties).
/// Box: best of random probes and multi-start compass ascent; never returns a
/// visited point.
Selection maximize_acquisition(const AcquisitionScorer& scorer, const Domain& domain, const Visited& visited,
                               std::uint64_t seed, const BoxSearchOptions& options = {});

enum class InferenceBackend { MaximumLikelihood, MaximumAPosteriori, Mcmc };

std::string_view to_string(InferenceBackend backend) noexcept;
InferenceBackend inference_backend_from_string(std::string_view name);

struct BoConfig {
    Domain domain = Domain::box(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    KernelKind kernel = KernelKind::SquaredExponential;
    InferenceBackend backend = InferenceBackend::MaximumLikelihood;
    PriorSpec priors;
    // Starting point for ML/MAP; defaults to the prior midpoint.
    std::optional<Hyperparams> initial_theta;
    GradAscentConfig grad;
    McmcConfig mcmc;
    AcquisitionKind acquisition = AcquisitionKind::ExpectedImprovement;
    ThresholdSpec threshold;  // scaled units, Bichon only
    int init_count = 3;
    int max_iterations = 20;
    std::uint64_t seed = 0;
    // Fit the surrogate to standardized outputs (zero mean, unit variance).
    bool standardize_outputs = true;
    BoxSearchOptions search;

    void validate() const;
};

struct BoRecord {
    int iteration = 0;  // 0 for the initial design
    Eigen::VectorXd x;  // natural coordinates
    std::optional<std::size_t> grid_index;
    double y = 0.0;          // natural objective value
    double y_scaled = 0.0;   // value seen by the minimizing core
    double incumbent = 0.0;  // best natural value so far
    double incumbent_scaled = 0.0;
    double acquisition = 0.0;
    Hyperparams theta;       // point estimate, or the sample mean for MCMC
};

struct BoTrace {
    std::vector<BoRecord> records;
    long evaluation_count = 0;
    std::vector<std::string> failures;
    std::vector<std::string> warnings;
    bool aborted = false;

    [[nodiscard]] const BoRecord& best() const;
};

// Output standardization applied before GP fitting.
struct OutputTransform {
    double shift = 0.0;
    double scale = 1.0;

    static OutputTransform fit(const Eigen::VectorXd& y, bool enabled);
    [[nodiscard]] double forward(double y) const noexcept { return (y - shift) / scale; }
    [[nodiscard]] double inverse(double z) const noexcept { return z * scale + shift; }
};

// Surrogate state for one BO iteration: fitted posterior(s) over the
// standardized outputs.
struct SurrogateFit {
    OutputTransform transform;
    Dataset standardized;
    std::vector<GpPosterior> posteriors;  // one for ML/MAP, one per sample for MCMC
    Hyperparams summary;
    std::vector<std::string> warnings;
};

/// Fits the surrogate for the configured backend. `warm_start` seeds ML/MAP.
SurrogateFit fit_surrogate(const Dataset& data, const BoConfig& cfg, const Hyperparams& warm_start,
                           std::uint64_t seed);

/// Sequential optimization loop. The objective must have unit-box bounds
/// matching cfg.domain; it is called exactly init_count + max_iterations
/// times unless an evaluation fails.
BoTrace run_bo(const BoConfig& cfg, ScaledObjective& objective);

}  // namespace emtbo
