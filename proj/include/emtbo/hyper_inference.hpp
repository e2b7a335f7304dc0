#pragma once

#include "emtbo/gp.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace emtbo {

struct UniformBound {
    double lower = 0.1;
    double upper = 1.0;

    [[nodiscard]] double width() const noexcept { return upper - lower; }
    [[nodiscard]] bool contains(double v) const noexcept { return v >= lower && v <= upper; }
};

// Independent uniform priors. All lengthscales share one bound; the number of
// lengthscales (1 = shared, d = per-dimension) and the noise variance are
// carried here so samplers can build complete Hyperparams.
struct PriorSpec {
    UniformBound amplitude{0.1, 6.0};
    UniformBound lengthscale{0.1, 1.0};
    Eigen::Index lengthscale_count = 1;
    double noise_variance = 1e-6;

    void validate() const;
    [[nodiscard]] bool contains(const Hyperparams& theta) const;
    [[nodiscard]] Hyperparams midpoint() const;
};

struct GradAscentConfig {
    int steps = 100;
    double step_size = 1e-4;
    // Ascend on log(theta) with the log-space gradient; otherwise on theta directly.
    bool log_space = true;
    int max_backtracks = 30;
    // Longest move per step in the ascent space; large early gradients otherwise
    // throw the lengthscale onto the white-noise plateau in one step.
    double max_step = 1.0;

    void validate() const;
};

struct EstimateResult {
    Hyperparams theta;
    double objective = 0.0;        // LML (ML) or log-prior + LML (MAP) at theta
    double initial_objective = 0.0;
    int steps_taken = 0;
    bool nonfinite_encountered = false;
};

/// Gradient ascent on the log marginal likelihood for exactly cfg.steps steps.
/// Each step backtracks until the likelihood does not decrease, so the result
/// is never worse than `init`.
EstimateResult ml_estimate(const Dataset& data, KernelKind kind, const Hyperparams& init,
                           const GradAscentConfig& cfg = {});

/// Projected gradient ascent on log-prior + LML; iterates stay inside the prior box.
EstimateResult map_estimate(const Dataset& data, KernelKind kind, const PriorSpec& priors, const Hyperparams& init,
                            const GradAscentConfig& cfg = {});

struct McmcConfig {
    int sample_count = 100;
    int burn_in = 100;
    int thinning = 1;
    // Random-walk standard deviation per hyperparameter (amplitude first). Empty
    // selects 5% of each prior width.
    std::vector<double> proposal_scale;
    std::uint64_t seed = 0;

    void validate() const;
};

struct McmcResult {
    std::vector<Hyperparams> samples;
    double acceptance_rate = 0.0;
    bool burn_in_all_rejected = false;
};

/// Random-walk Metropolis over (amplitude, lengthscales) targeting
/// log-prior + LML. An empty dataset samples the prior.
McmcResult mcmc_sample(const Dataset& data, KernelKind kind, const PriorSpec& priors, const McmcConfig& cfg);

/// Metropolis acceptance for a log target ratio and a uniform draw in [0, 1).
inline bool metropolis_accept(double log_ratio, double u) {
    return log_ratio >= 0.0 || u < std::exp(log_ratio);
}

/// log-prior + LML; -infinity outside the prior support or when the Gram
/// matrix cannot be factorized.
double log_posterior(const Dataset& data, KernelKind kind, const PriorSpec& priors, const Hyperparams& theta);

}  // namespace emtbo
