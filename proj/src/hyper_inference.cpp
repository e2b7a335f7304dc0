#include "emtbo/hyper_inference.hpp"

#include "emtbo/error.hpp"
#include "emtbo/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace emtbo {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd pack(const Hyperparams& theta) {
    Eigen::VectorXd p(theta.free_count());
    p[0] = theta.signal_amplitude;
    p.tail(theta.lengthscales.size()) = theta.lengthscales;
    return p;
}

Hyperparams unpack(const Eigen::VectorXd& p, double noise) {
    Hyperparams theta;
    theta.signal_amplitude = p[0];
    theta.lengthscales = p.tail(p.size() - 1);
    theta.noise_variance = noise;
    return theta;
}

struct Evaluation {
    double value = neg_inf;
    Eigen::VectorXd gradient;  // natural-space gradient
};

std::optional<Evaluation> evaluate_lml(const Dataset& data, KernelKind kind, const Hyperparams& theta) {
    try {
        auto r = log_marginal_likelihood(data, kind, theta);
        if (!std::isfinite(r.value) || !r.gradient.allFinite()) {
            return std::nullopt;
        }
        return Evaluation{r.value, std::move(r.gradient)};
    } catch (const Error& e) {
        if (e.code() == Errc::not_positive_definite || e.code() == Errc::invalid_argument) {
            return std::nullopt;
        }
        throw;
    }
}

// Shared fixed-step ascent. `bounds` (natural space) enables projection.
EstimateResult ascend(const Dataset& data, KernelKind kind, const Hyperparams& init, const GradAscentConfig& cfg,
                      const PriorSpec* bounds) {
    cfg.validate();
    init.validate();
    init.check_dimension(data.dim());
    if (data.size() < 2) {
        throw Error(Errc::invalid_argument, "hyperparameter estimation needs at least two observations");
    }

    const double noise = init.noise_variance;
    const Eigen::Index m = init.free_count();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(m, 0.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    if (bounds != nullptr) {
        lo[0] = bounds->amplitude.lower;
        hi[0] = bounds->amplitude.upper;
        lo.tail(m - 1).setConstant(bounds->lengthscale.lower);
        hi.tail(m - 1).setConstant(bounds->lengthscale.upper);
    }

    // Parameter vector in the ascent space.
    auto to_space = [&](const Eigen::VectorXd& natural) -> Eigen::VectorXd {
        return cfg.log_space ? Eigen::VectorXd(natural.array().log()) : natural;
    };
    auto to_natural = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd {
        Eigen::VectorXd natural = cfg.log_space ? Eigen::VectorXd(q.array().exp()) : q;
        if (bounds != nullptr) {
            natural = natural.cwiseMax(lo).cwiseMin(hi);
        }
        return natural;
    };

    EstimateResult result;
    result.theta = init;
    auto current_eval = evaluate_lml(data, kind, init);
    if (!current_eval) {
        throw Error(Errc::not_positive_definite, "log marginal likelihood is not finite at the initial hyperparameters");
    }
    Eigen::VectorXd natural = pack(init);
    Evaluation current = *current_eval;
    result.initial_objective = current.value;

    for (int step = 0; step < cfg.steps; ++step) {
        ++result.steps_taken;
        Eigen::VectorXd grad = current.gradient;
        if (cfg.log_space) {
            grad = grad.cwiseProduct(natural);
        }
        if (grad.norm() < 1e-12) {
            continue;
        }
        const Eigen::VectorXd q = to_space(natural);
        double eta = std::min(cfg.step_size, cfg.max_step / grad.norm());
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt, eta *= 0.5) {
            const Eigen::VectorXd candidate = to_natural(q + eta * grad);
            if ((candidate.array() <= 0.0).any() || candidate == natural) {
                continue;
            }
            auto trial = evaluate_lml(data, kind, unpack(candidate, noise));
            if (!trial) {
                result.nonfinite_encountered = true;
                continue;
            }
            if (trial->value >= current.value) {
                natural = candidate;
                current = std::move(*trial);
                break;
            }
        }
    }
    result.theta = unpack(natural, noise);
    result.objective = current.value;
    return result;
}

}  // namespace

void PriorSpec::validate() const {
    for (const auto& b : {amplitude, lengthscale}) {
        if (!(b.lower > 0.0) || !(b.lower < b.upper) || !std::isfinite(b.upper)) {
            throw Error(Errc::invalid_argument, "uniform prior bounds must satisfy 0 < lower < upper < inf");
        }
    }
    if (lengthscale_count < 1) {
        throw Error(Errc::invalid_argument, "prior needs at least one lengthscale");
    }
    if (!(noise_variance >= 0.0)) {
        throw Error(Errc::invalid_argument, "noise variance must be non-negative");
    }
}

bool PriorSpec::contains(const Hyperparams& theta) const {
    if (!amplitude.contains(theta.signal_amplitude)) {
        return false;
    }
    for (Eigen::Index i = 0; i < theta.lengthscales.size(); ++i) {
        if (!lengthscale.contains(theta.lengthscales[i])) {
            return false;
        }
    }
    return true;
}

Hyperparams PriorSpec::midpoint() const {
    Hyperparams theta;
    theta.signal_amplitude = 0.5 * (amplitude.lower + amplitude.upper);
    theta.lengthscales = Eigen::VectorXd::Constant(lengthscale_count, 0.5 * (lengthscale.lower + lengthscale.upper));
    theta.noise_variance = noise_variance;
    return theta;
}

void GradAscentConfig::validate() const {
    if (steps < 1) {
        throw Error(Errc::invalid_argument, "gradient ascent needs at least one step");
    }
    if (!(step_size > 0.0)) {
        throw Error(Errc::invalid_argument, "gradient ascent step size must be positive");
    }
    if (!(max_step > 0.0)) {
        throw Error(Errc::invalid_argument, "gradient ascent step cap must be positive");
    }
    if (max_backtracks < 0) {
        throw Error(Errc::invalid_argument, "backtrack count must be non-negative");
    }
}

void McmcConfig::validate() const {
    if (sample_count < 1) {
        throw Error(Errc::invalid_argument, "MCMC needs at least one sample");
    }
    if (burn_in < 0 || thinning < 1) {
        throw Error(Errc::invalid_argument, "MCMC burn-in must be >= 0 and thinning >= 1");
    }
    for (double s : proposal_scale) {
        if (!(s > 0.0)) {
            throw Error(Errc::invalid_argument, "MCMC proposal scales must be positive");
        }
    }
}

EstimateResult ml_estimate(const Dataset& data, KernelKind kind, const Hyperparams& init,
                           const GradAscentConfig& cfg) {
    return ascend(data, kind, init, cfg, nullptr);
}

EstimateResult map_estimate(const Dataset& data, KernelKind kind, const PriorSpec& priors, const Hyperparams& init,
                            const GradAscentConfig& cfg) {
    priors.validate();
    if (!priors.contains(init)) {
        throw Error(Errc::out_of_support, "initial hyperparameters lie outside the prior support");
    }
    // The uniform log-prior is constant on the support, so the objective is
    // the LML restricted to the box.
    return ascend(data, kind, init, cfg, &priors);
}

double log_posterior(const Dataset& data, KernelKind kind, const PriorSpec& priors, const Hyperparams& theta) {
    if (!priors.contains(theta)) {
        return neg_inf;
    }
    double log_prior = -std::log(priors.amplitude.width()) -
                       static_cast<double>(theta.lengthscales.size()) * std::log(priors.lengthscale.width());
    if (data.empty()) {
        return log_prior;
    }
    auto e = evaluate_lml(data, kind, theta);
    return e ? log_prior + e->value : neg_inf;
}

McmcResult mcmc_sample(const Dataset& data, KernelKind kind, const PriorSpec& priors, const McmcConfig& cfg) {
    priors.validate();
    cfg.validate();
    const Eigen::Index m = 1 + priors.lengthscale_count;
    if (!data.empty() && priors.lengthscale_count != 1 && priors.lengthscale_count != data.dim()) {
        throw Error(Errc::dimension_mismatch, "prior lengthscale count does not match the data dimension");
    }
    Eigen::VectorXd scale(m);
    if (cfg.proposal_scale.empty()) {
        scale[0] = 0.05 * priors.amplitude.width();
        scale.tail(m - 1).setConstant(0.05 * priors.lengthscale.width());
    } else if (static_cast<Eigen::Index>(cfg.proposal_scale.size()) == m) {
        for (Eigen::Index i = 0; i < m; ++i) {
            scale[i] = cfg.proposal_scale[static_cast<std::size_t>(i)];
        }
    } else {
        throw Error(Errc::dimension_mismatch, "MCMC proposal scale needs one entry per hyperparameter");
    }

    Rng rng(cfg.seed);
    Hyperparams state;
    state.noise_variance = priors.noise_variance;
    state.signal_amplitude = priors.amplitude.lower + priors.amplitude.width() * uniform01(rng);
    state.lengthscales.resize(priors.lengthscale_count);
    for (Eigen::Index i = 0; i < priors.lengthscale_count; ++i) {
        state.lengthscales[i] = priors.lengthscale.lower + priors.lengthscale.width() * uniform01(rng);
    }
    double current = log_posterior(data, kind, priors, state);

    McmcResult result;
    result.samples.reserve(static_cast<std::size_t>(cfg.sample_count));
    const long total = static_cast<long>(cfg.burn_in) + static_cast<long>(cfg.sample_count) * cfg.thinning;
    long accepted = 0;
    long burn_accepted = 0;
    Hyperparams proposal = state;
    for (long step = 0; step < total; ++step) {
        proposal.signal_amplitude = state.signal_amplitude + scale[0] * standard_normal(rng);
        for (Eigen::Index i = 0; i < priors.lengthscale_count; ++i) {
            proposal.lengthscales[i] = state.lengthscales[i] + scale[1 + i] * standard_normal(rng);
        }
        const double u = uniform01(rng);
        if (priors.contains(proposal)) {
            const double candidate = log_posterior(data, kind, priors, proposal);
            // An unfactorizable current state always yields to a finite proposal.
            const double log_ratio = std::isfinite(current) ? candidate - current : 0.0;
            if (std::isfinite(candidate) && metropolis_accept(log_ratio, u)) {
                state = proposal;
                current = candidate;
                ++accepted;
                if (step < cfg.burn_in) {
                    ++burn_accepted;
                }
            }
        }
        if (step >= cfg.burn_in && (step - cfg.burn_in + 1) % cfg.thinning == 0) {
            result.samples.push_back(state);
        }
    }
    result.acceptance_rate = total > 0 ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0;
    result.burn_in_all_rejected = cfg.burn_in > 0 && burn_accepted == 0;
    return result;
}

}  // namespace emtbo
