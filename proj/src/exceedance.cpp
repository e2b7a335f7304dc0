#include "emtbo/exceedance.hpp"

#include "emtbo/error.hpp"
#include "emtbo/parallel.hpp"
#include "emtbo/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace emtbo {

void ExceedanceStudy::validate() const {
    if (n_init < 2) {
        throw Error(Errc::invalid_argument, "exceedance study needs at least two initial samples");
    }
    if (n_acquire < 0 || estimator_samples < 1) {
        throw Error(Errc::invalid_argument, "acquisition count must be >= 0 and estimator samples >= 1");
    }
    if (!(threshold_kv > 0.0 && threshold_kv <= 2000.0)) {
        throw Error(Errc::invalid_argument, "threshold must lie in (0, 2000] kV");
    }
    if (!(output_divisor > 0.0)) {
        throw Error(Errc::invalid_argument, "output divisor must be positive");
    }
    ThresholdSpec{scaled_threshold(), delta, alpha}.validate();
}

BoConfig ExceedanceStudy::bo_config(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) const {
    BoConfig cfg;
    cfg.domain = Domain::box(lower, upper);
    cfg.kernel = kernel;
    cfg.backend = InferenceBackend::MaximumAPosteriori;
    cfg.priors = priors;
    cfg.grad = grad;
    cfg.acquisition = AcquisitionKind::Bichon;
    cfg.threshold = ThresholdSpec{scaled_threshold(), delta, alpha};
    cfg.init_count = n_init;
    cfg.max_iterations = n_acquire;
    cfg.seed = seed;
    cfg.search = search;
    return cfg;
}

Prediction ClassificationResult::predict_scaled(const Eigen::VectorXd& unit_x) const {
    const Prediction p = posterior.predict(unit_x);
    return Prediction{transform.inverse(p.mean), p.variance * transform.scale * transform.scale};
}

ClassificationResult run_classification(const ExceedanceStudy& study, ScaledObjective& objective) {
    study.validate();
    if (objective.sense() != Sense::Minimize) {
        throw Error(Errc::invalid_argument, "exceedance objective must not flip the output sign");
    }
    const Eigen::Index dim = objective.dimension();
    const BoConfig cfg = study.bo_config(objective.lower(), objective.upper());
    BoTrace trace = run_bo(cfg, objective);
    if (trace.aborted) {
        throw Error(Errc::objective_failure, "classification design aborted: " +
                                                 (trace.failures.empty() ? std::string("unknown") : trace.failures.back()));
    }

    Dataset data(dim);
    std::vector<Eigen::VectorXd> acquired;
    for (const auto& r : trace.records) {
        const Eigen::VectorXd unit = objective.to_unit(r.x);
        data.add(unit, r.y_scaled);
        if (r.iteration > 0) {
            acquired.push_back(unit);
        }
    }
    const Hyperparams warm = trace.records.back().theta;
    SurrogateFit fit = fit_surrogate(data, cfg, warm, derive_seed(study.seed, "final-refit"));
    return ClassificationResult{std::move(fit.posteriors.front()), fit.transform, std::move(data),
                                std::move(acquired), std::move(trace), study.scaled_threshold()};
}

ExceedanceEstimate estimate_exceedance_probability(const ClassificationResult& result, double threshold_kv,
                                                   double output_divisor, long samples, std::uint64_t seed) {
    if (samples < 1) {
        throw Error(Errc::invalid_argument, "estimator needs at least one sample");
    }
    const double t = threshold_kv / output_divisor;
    const Eigen::Index dim = result.data.dim();
    Rng rng(seed);
    long above = 0;
    double soft = 0.0;
    Eigen::VectorXd x(dim);
    for (long i = 0; i < samples; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            x[j] = uniform01(rng);
        }
        const Prediction p = result.predict_scaled(x);
        if (p.mean > t) {
            ++above;
        }
        const double s = std::sqrt(p.variance);
        soft += s > 0.0 ? normal_cdf((p.mean - t) / s) : (p.mean > t ? 1.0 : 0.0);
    }
    const double n = static_cast<double>(samples);
    return ExceedanceEstimate{static_cast<double>(above) / n, soft / n};
}

ExceedanceEstimate estimate_exceedance_probability(const ClassificationResult& result, const ExceedanceStudy& study,
                                                   std::uint64_t seed) {
    return estimate_exceedance_probability(result, study.threshold_kv, study.output_divisor, study.estimator_samples,
                                           seed);
}

OracleResult monte_carlo_oracle(const ObjectiveFn& objective, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, double threshold_kv, long n, std::uint64_t seed,
                                unsigned jobs) {
    if (n < 1) {
        throw Error(Errc::invalid_argument, "Monte Carlo oracle needs at least one sample");
    }
    const Eigen::Index dim = lower.size();
    std::vector<double> values(static_cast<std::size_t>(n), 0.0);
    std::vector<char> ok(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
        // Per-sample stream keeps results independent of the worker count.
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Eigen::VectorXd x(dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            x[j] = lower[j] + (upper[j] - lower[j]) * uniform01(rng);
        }
        try {
            const double v = objective(std::span<const double>(x.data(), static_cast<std::size_t>(dim)));
            if (std::isfinite(v)) {
                values[i] = v;
                ok[i] = 1;
            }
        } catch (const Error& e) {
            if (e.code() != Errc::nonconvergence && e.code() != Errc::objective_failure) {
                throw;
            }
        }
    });

    OracleResult out;
    out.samples = n;
    long above = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!ok[i]) {
            ++out.failures;
            continue;
        }
        out.values.push_back(values[i]);
        if (values[i] > threshold_kv) {
            ++above;
        }
    }
    if (out.failures > 0 && static_cast<double>(out.failures) >= 1e-3 * static_cast<double>(n)) {
        throw Error(Errc::objective_failure, std::to_string(out.failures) + " of " + std::to_string(n) +
                                                 " Monte Carlo evaluations failed");
    }
    const auto used = static_cast<double>(out.values.size());
    out.probability = used > 0.0 ? static_cast<double>(above) / used : 0.0;
    out.ci_half_width = used > 0.0 ? 1.96 * std::sqrt(out.probability * (1.0 - out.probability) / used) : 0.0;
    return out;
}

}  // namespace emtbo
