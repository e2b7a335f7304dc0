#pragma once

#include "emtbo/bo_loop.hpp"

#include <cstdint>
#include <vector>

namespace emtbo {

// Threshold-exceedance study on the energization objective. Outputs are
// scaled by `output_divisor` (kV) without sign flip.
struct ExceedanceStudy {
    double threshold_kv = 750.0;
    int n_init = 5;
    int n_acquire = 10;
    long estimator_samples = 100000;
    double output_divisor = 800.0;
    double delta = 1.0;
    double alpha = 1.0;
    KernelKind kernel = KernelKind::Matern52;
    PriorSpec priors;
    GradAscentConfig grad;
    BoxSearchOptions search;
    std::uint64_t seed = 0;

    [[nodiscard]] double scaled_threshold() const noexcept { return threshold_kv / output_divisor; }
    void validate() const;
    // BO configuration for the sequential design over the natural input box.
    [[nodiscard]] BoConfig bo_config(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) const;
};

struct ClassificationResult {
    GpPosterior posterior;         // fitted on standardized outputs
    OutputTransform transform;     // standardized -> scaled outputs
    Dataset data;                  // unit inputs, scaled outputs
    std::vector<Eigen::VectorXd> acquired;  // unit points chosen by the criterion
    BoTrace trace;
    double scaled_threshold = 0.0;

    // Posterior mean and standard deviation in scaled output units.
    [[nodiscard]] Prediction predict_scaled(const Eigen::VectorXd& unit_x) const;
};

/// Uniform initial design followed by threshold-band acquisition with a MAP
/// refit every round; the returned posterior is refitted on all data.
ClassificationResult run_classification(const ExceedanceStudy& study, ScaledObjective& objective);

struct ExceedanceEstimate {
    double hard = 0.0;  // fraction with posterior mean above the threshold
    double soft = 0.0;  // mean of P(f > T) under the posterior
};

/// Surrogate-only estimate from study.estimator_samples uniform inputs.
ExceedanceEstimate estimate_exceedance_probability(const ClassificationResult& result, const ExceedanceStudy& study,
                                                   std::uint64_t seed);
/// Same, with an explicit threshold in kV (for threshold sweeps on one posterior).
ExceedanceEstimate estimate_exceedance_probability(const ClassificationResult& result, double threshold_kv,
                                                   double output_divisor, long samples, std::uint64_t seed);

struct OracleResult {
    double probability = 0.0;
    long samples = 0;
    long failures = 0;
    double ci_half_width = 0.0;  // binomial 95 %
    std::vector<double> values;  // natural objective values of successful runs
};

/// Direct Monte Carlo: N uniform draws over the unit box of `objective`,
/// fraction strictly above threshold_kv. Failed evaluations are excluded when
/// they are fewer than 0.1 % of N; otherwise Error(objective_failure).
OracleResult monte_carlo_oracle(const ObjectiveFn& objective, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, double threshold_kv, long n, std::uint64_t seed,
                                unsigned jobs = 1);

}  // namespace emtbo
