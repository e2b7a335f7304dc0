#include "emtbo/bo_loop.hpp"

#include "emtbo/error.hpp"
#include "emtbo/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace emtbo {

namespace {

double axis_to_unit(const std::vector<double>& axis, double v) {
    const double span = axis.back() - axis.front();
    return span > 0.0 ? (v - axis.front()) / span : 0.0;
}

struct Ascent {
    Eigen::VectorXd x;
    double value = 0.0;
};

// Compass (coordinate pattern) search inside the unit box.
Ascent compass_ascent(const AcquisitionScorer& scorer, Eigen::VectorXd x, const BoxSearchOptions& opt) {
    double fx = scorer(x);
    double step = opt.initial_step;
    int budget = 20000;
    while (step >= opt.min_step && budget > 0) {
        bool improved = false;
        for (Eigen::Index j = 0; j < x.size() && budget > 0; ++j) {
            for (double dir : {1.0, -1.0}) {
                Eigen::VectorXd y = x;
                y[j] = std::clamp(x[j] + dir * step, 0.0, 1.0);
                if (y[j] == x[j]) {
                    continue;
                }
                const double fy = scorer(y);
                --budget;
                if (fy > fx) {
                    x = std::move(y);
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) {
            step *= 0.5;
        }
    }
    return {std::move(x), fx};
}

Eigen::VectorXd random_unit_point(Rng& rng, Eigen::Index d) {
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        x[j] = uniform01(rng);
    }
    return x;
}

Hyperparams template_theta(const BoConfig& cfg, const Hyperparams& base) {
    Hyperparams t = base;
    t.noise_variance = cfg.priors.noise_variance;
    if (t.lengthscales.size() != cfg.priors.lengthscale_count) {
        t.lengthscales = Eigen::VectorXd::Constant(cfg.priors.lengthscale_count, t.lengthscales.mean());
    }
    return t;
}

Hyperparams clamp_to_prior(const PriorSpec& priors, Hyperparams theta) {
    theta.signal_amplitude = std::clamp(theta.signal_amplitude, priors.amplitude.lower, priors.amplitude.upper);
    for (Eigen::Index i = 0; i < theta.lengthscales.size(); ++i) {
        theta.lengthscales[i] = std::clamp(theta.lengthscales[i], priors.lengthscale.lower, priors.lengthscale.upper);
    }
    return theta;
}

Hyperparams mean_theta(const std::vector<GpPosterior>& posteriors) {
    Hyperparams mean = posteriors.front().hyperparams();
    mean.signal_amplitude = 0.0;
    mean.lengthscales.setZero();
    for (const auto& p : posteriors) {
        mean.signal_amplitude += p.hyperparams().signal_amplitude;
        mean.lengthscales += p.hyperparams().lengthscales;
    }
    const double m = static_cast<double>(posteriors.size());
    mean.signal_amplitude /= m;
    mean.lengthscales /= m;
    return mean;
}

bool is_recoverable(const Error& e) {
    return e.code() == Errc::objective_failure || e.code() == Errc::nonconvergence ||
           e.code() == Errc::lookup_miss;
}

}  // namespace

Domain Domain::grid(std::vector<std::vector<double>> axes) {
    if (axes.empty()) {
        throw Error(Errc::invalid_argument, "grid domain needs at least one axis");
    }
    for (const auto& axis : axes) {
        if (axis.empty()) {
            throw Error(Errc::invalid_argument, "grid axes must be non-empty");
        }
        for (std::size_t i = 1; i < axis.size(); ++i) {
            if (!(axis[i] > axis[i - 1])) {
                throw Error(Errc::invalid_argument, "grid axes must be strictly increasing");
            }
        }
    }
    Domain d;
    d.repr_ = GridDomain{std::move(axes)};
    return d;
}

Domain Domain::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
    if (lower.size() != upper.size() || lower.size() == 0) {
        throw Error(Errc::dimension_mismatch, "box bounds must be non-empty and of equal length");
    }
    if (!((upper - lower).array() > 0.0).all()) {
        throw Error(Errc::invalid_argument, "box bounds must satisfy lower < upper componentwise");
    }
    Domain d;
    d.repr_ = BoxDomain{std::move(lower), std::move(upper)};
    return d;
}

Eigen::Index Domain::dimension() const noexcept {
    if (const auto* g = std::get_if<GridDomain>(&repr_)) {
        return static_cast<Eigen::Index>(g->axes.size());
    }
    return std::get<BoxDomain>(repr_).lower.size();
}

Eigen::VectorXd Domain::lower() const {
    if (const auto* g = std::get_if<GridDomain>(&repr_)) {
        Eigen::VectorXd lo(dimension());
        for (std::size_t i = 0; i < g->axes.size(); ++i) {
            lo[static_cast<Eigen::Index>(i)] = g->axes[i].front();
        }
        return lo;
    }
    return std::get<BoxDomain>(repr_).lower;
}

Eigen::VectorXd Domain::upper() const {
    if (const auto* g = std::get_if<GridDomain>(&repr_)) {
        Eigen::VectorXd hi(dimension());
        for (std::size_t i = 0; i < g->axes.size(); ++i) {
            hi[static_cast<Eigen::Index>(i)] = g->axes[i].back();
        }
        return hi;
    }
    return std::get<BoxDomain>(repr_).upper;
}

std::size_t Domain::grid_size() const {
    const auto& g = as_grid();
    std::size_t n = 1;
    for (const auto& axis : g.axes) {
        n *= axis.size();
    }
    return n;
}

Eigen::VectorXd Domain::grid_point(std::size_t linear_index) const {
    const auto& g = as_grid();
    if (linear_index >= grid_size()) {
        throw Error(Errc::invalid_argument, "grid index out of range");
    }
    Eigen::VectorXd x(dimension());
    for (std::size_t a = g.axes.size(); a-- > 0;) {
        const std::size_t n = g.axes[a].size();
        x[static_cast<Eigen::Index>(a)] = g.axes[a][linear_index % n];
        linear_index /= n;
    }
    return x;
}

Eigen::VectorXd Domain::to_unit(const Eigen::Ref<const Eigen::VectorXd>& natural) const {
    if (natural.size() != dimension()) {
        throw Error(Errc::dimension_mismatch, "point dimension does not match the domain");
    }
    if (const auto* g = std::get_if<GridDomain>(&repr_)) {
        Eigen::VectorXd u(natural.size());
        for (Eigen::Index i = 0; i < natural.size(); ++i) {
            u[i] = axis_to_unit(g->axes[static_cast<std::size_t>(i)], natural[i]);
        }
        return u;
    }
    const auto& b = std::get<BoxDomain>(repr_);
    return ((natural - b.lower).array() / (b.upper - b.lower).array()).matrix();
}

Eigen::VectorXd Domain::from_unit(const Eigen::Ref<const Eigen::VectorXd>& unit) const {
    const Eigen::VectorXd lo = lower();
    const Eigen::VectorXd hi = upper();
    return (lo.array() + unit.array() * (hi - lo).array()).matrix();
}

Design initial_design(const Domain& domain, std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw Error(Errc::invalid_argument, "initial design needs at least one point");
    }
    Rng rng(seed);
    Design design;
    if (domain.is_grid()) {
        const std::size_t size = domain.grid_size();
        if (n > size) {
            throw Error(Errc::grid_exhausted, "initial design of " + std::to_string(n) + " points exceeds the " +
                                                  std::to_string(size) + "-point grid");
        }
        std::vector<std::size_t> idx(size);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (size - i));
            std::swap(idx[i], idx[j]);
            design.grid_indices.push_back(idx[i]);
            design.points.push_back(domain.grid_point(idx[i]));
        }
        return design;
    }
    for (std::size_t i = 0; i < n; ++i) {
        design.points.push_back(domain.from_unit(random_unit_point(rng, domain.dimension())));
    }
    return design;
}

Selection maximize_acquisition(const AcquisitionScorer& scorer, const Domain& domain, const Visited& visited,
                               std::uint64_t seed, const BoxSearchOptions& options) {
    if (domain.is_grid()) {
        const std::size_t size = domain.grid_size();
        std::vector<bool> taken(size, false);
        for (std::size_t i : visited.grid_indices) {
            if (i < size) {
                taken[i] = true;
            }
        }
        std::optional<std::size_t> best;
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < size; ++i) {
            if (taken[i]) {
                continue;
            }
            const Eigen::VectorXd natural = domain.grid_point(i);
            const double v = scorer(domain.to_unit(natural));
            // Strict comparison keeps the lowest index on ties; NaN never wins
            // unless nothing else is available.
            if (!best || v > best_value) {
                best = i;
                best_value = v;
            }
        }
        if (!best) {
            throw Error(Errc::grid_exhausted, "every grid point has already been evaluated");
        }
        Eigen::VectorXd natural = domain.grid_point(*best);
        return Selection{domain.to_unit(natural), std::move(natural), best, best_value};
    }

    const Eigen::Index d = domain.dimension();
    Rng rng(seed);
    Ascent best{Eigen::VectorXd::Constant(d, 0.5), -std::numeric_limits<double>::infinity()};
    for (int i = 0; i < options.probe_count; ++i) {
        Eigen::VectorXd x = random_unit_point(rng, d);
        const double v = scorer(x);
        if (v > best.value || i == 0) {
            best = {std::move(x), v};
        }
    }
    std::vector<Eigen::VectorXd> starts;
    for (int s = 0; s < options.local_starts; ++s) {
        starts.push_back(random_unit_point(rng, d));
    }
    if (options.probe_count > 0) {
        starts.push_back(best.x);
    }
    for (auto& start : starts) {
        auto local = compass_ascent(scorer, std::move(start), options);
        if (local.value > best.value) {
            best = std::move(local);
        }
    }

    Eigen::VectorXd x = best.x;
    for (const auto& v : visited.unit_points) {
        if ((v - x).cwiseAbs().maxCoeff() < 1e-12) {
            for (Eigen::Index j = 0; j < d; ++j) {
                x[j] = x[j] + 1e-9 <= 1.0 ? x[j] + 1e-9 : x[j] - 1e-9;
            }
        }
    }
    const double value = x == best.x ? best.value : scorer(x);
    return Selection{x, domain.from_unit(x), std::nullopt, value};
}

std::string_view to_string(InferenceBackend backend) noexcept {
    switch (backend) {
        case InferenceBackend::MaximumLikelihood: return "ml";
        case InferenceBackend::MaximumAPosteriori: return "map";
        case InferenceBackend::Mcmc: return "mcmc";
    }
    return "unknown";
}

InferenceBackend inference_backend_from_string(std::string_view name) {
    if (name == "ml") {
        return InferenceBackend::MaximumLikelihood;
    }
    if (name == "map") {
        return InferenceBackend::MaximumAPosteriori;
    }
    if (name == "mcmc") {
        return InferenceBackend::Mcmc;
    }
    throw Error(Errc::invalid_argument, "unknown inference backend '" + std::string(name) + "'");
}

void BoConfig::validate() const {
    if (init_count < 1) {
        throw Error(Errc::invalid_argument, "init_count must be at least 1");
    }
    if (max_iterations < 0) {
        throw Error(Errc::invalid_argument, "max_iterations must be non-negative");
    }
    priors.validate();
    if (priors.lengthscale_count != 1 && priors.lengthscale_count != domain.dimension()) {
        throw Error(Errc::dimension_mismatch, "lengthscale count must be 1 or the domain dimension");
    }
    if (backend != InferenceBackend::Mcmc) {
        grad.validate();
    } else {
        mcmc.validate();
    }
    if (acquisition == AcquisitionKind::Bichon) {
        threshold.validate();
    }
    if (domain.is_grid() && static_cast<std::size_t>(init_count) > domain.grid_size()) {
        throw Error(Errc::grid_exhausted, "init_count exceeds the number of grid points");
    }
}

const BoRecord& BoTrace::best() const {
    if (records.empty()) {
        throw Error(Errc::invalid_argument, "empty trace has no best record");
    }
    return *std::min_element(records.begin(), records.end(),
                             [](const BoRecord& a, const BoRecord& b) { return a.y_scaled < b.y_scaled; });
}

OutputTransform OutputTransform::fit(const Eigen::VectorXd& y, bool enabled) {
    OutputTransform t;
    if (!enabled || y.size() == 0) {
        return t;
    }
    t.shift = y.mean();
    if (y.size() > 1) {
        const double sd = std::sqrt((y.array() - t.shift).square().mean());
        if (sd > 1e-12 * std::max(1.0, std::abs(t.shift))) {
            t.scale = sd;
        }
    }
    return t;
}

SurrogateFit fit_surrogate(const Dataset& data, const BoConfig& cfg, const Hyperparams& warm_start,
                           std::uint64_t seed) {
    SurrogateFit fit;
    fit.transform = OutputTransform::fit(data.outputs(), cfg.standardize_outputs);
    Eigen::VectorXd z = data.outputs();
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = fit.transform.forward(z[i]);
    }
    fit.standardized = data.with_outputs(std::move(z));
    const Dataset& d = fit.standardized;
    const Hyperparams start = template_theta(cfg, warm_start);

    switch (cfg.backend) {
        case InferenceBackend::MaximumLikelihood:
        case InferenceBackend::MaximumAPosteriori: {
            Hyperparams theta = cfg.backend == InferenceBackend::MaximumAPosteriori ? clamp_to_prior(cfg.priors, start)
                                                                                    : start;
            if (d.size() >= 2) {
                try {
                    theta = cfg.backend == InferenceBackend::MaximumLikelihood
                                ? ml_estimate(d, cfg.kernel, theta, cfg.grad).theta
                                : map_estimate(d, cfg.kernel, cfg.priors, theta, cfg.grad).theta;
                } catch (const Error& e) {
                    if (e.code() != Errc::not_positive_definite) {
                        throw;
                    }
                    fit.warnings.push_back(std::string("hyperparameter estimate kept at start: ") + e.what());
                }
            }
            fit.posteriors.push_back(fit_posterior(d, cfg.kernel, theta));
            fit.summary = theta;
            break;
        }
        case InferenceBackend::Mcmc: {
            McmcConfig mc = cfg.mcmc;
            mc.seed = seed;
            const auto chain = mcmc_sample(d, cfg.kernel, cfg.priors, mc);
            if (chain.burn_in_all_rejected) {
                fit.warnings.push_back("MCMC rejected every burn-in proposal");
            }
            MarginalizedAcquisition holder(chain.samples, d, cfg.kernel, AcquisitionSpec{});
            fit.posteriors = holder.posteriors();
            for (const auto& w : holder.warnings()) {
                fit.warnings.push_back(w);
            }
            fit.summary = mean_theta(fit.posteriors);
            break;
        }
    }
    return fit;
}

BoTrace run_bo(const BoConfig& cfg, ScaledObjective& objective) {
    cfg.validate();
    const Domain& domain = cfg.domain;
    if (objective.dimension() != domain.dimension()) {
        throw Error(Errc::dimension_mismatch, "objective and domain dimensions differ");
    }

    BoTrace trace;
    Dataset data(domain.dimension());
    Visited visited;
    const long calls_before = objective.evaluations();
    double incumbent_scaled = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const Eigen::VectorXd& natural, const Eigen::VectorXd& unit,
                        std::optional<std::size_t> grid_index) {
        return grid_index ? objective.evaluate_natural(natural) : objective.evaluate(unit);
    };
    auto record = [&](int iteration, const Eigen::VectorXd& natural, const Eigen::VectorXd& unit,
                      std::optional<std::size_t> grid_index, double y_scaled, double acq, const Hyperparams& theta) {
        data.add(unit, y_scaled);
        if (grid_index) {
            visited.grid_indices.push_back(*grid_index);
        } else {
            visited.unit_points.push_back(unit);
        }
        incumbent_scaled = std::min(incumbent_scaled, y_scaled);
        BoRecord r;
        r.iteration = iteration;
        r.x = natural;
        r.grid_index = grid_index;
        r.y_scaled = y_scaled;
        r.y = objective.unscale_output(y_scaled);
        r.incumbent_scaled = incumbent_scaled;
        r.incumbent = objective.unscale_output(incumbent_scaled);
        r.acquisition = acq;
        r.theta = theta;
        trace.records.push_back(std::move(r));
    };

    const Hyperparams initial = template_theta(cfg, cfg.initial_theta.value_or(cfg.priors.midpoint()));
    const Design design =
        initial_design(domain, static_cast<std::size_t>(cfg.init_count), derive_seed(cfg.seed, "initial-design"));
    for (std::size_t i = 0; i < design.points.size(); ++i) {
        const Eigen::VectorXd& natural = design.points[i];
        const Eigen::VectorXd unit = domain.to_unit(natural);
        const auto grid_index = domain.is_grid() ? std::optional(design.grid_indices[i]) : std::nullopt;
        try {
            const double y = evaluate(natural, unit, grid_index);
            record(0, natural, unit, grid_index, y, 0.0, initial);
        } catch (const Error& e) {
            if (!is_recoverable(e)) {
                throw;
            }
            trace.failures.push_back("initial design point " + std::to_string(i) + ": " + e.what());
            trace.aborted = true;
            trace.evaluation_count = objective.evaluations() - calls_before;
            return trace;
        }
    }

    Hyperparams warm = initial;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        if (domain.is_grid() && visited.grid_indices.size() >= domain.grid_size()) {
            trace.warnings.push_back("grid exhausted after " + std::to_string(it - 1) + " iterations");
            break;
        }
        SurrogateFit fit = fit_surrogate(data, cfg, warm, derive_seed(cfg.seed, 1000003ULL * static_cast<std::uint64_t>(it)));
        for (auto& w : fit.warnings) {
            trace.warnings.push_back("iteration " + std::to_string(it) + ": " + w);
        }
        if (cfg.backend != InferenceBackend::Mcmc) {
            warm = fit.summary;
        }

        AcquisitionSpec spec;
        spec.kind = cfg.acquisition;
        spec.incumbent = Incumbent::from_data(fit.standardized, Sense::Minimize);
        spec.threshold = cfg.threshold;
        spec.threshold.threshold = fit.transform.forward(cfg.threshold.threshold);
        const MarginalizedAcquisition acquisition(std::move(fit.posteriors), spec);
        std::vector<Eigen::VectorXd> failed;
        const AcquisitionScorer scorer = [&acquisition, &failed](const Eigen::VectorXd& u) {
            for (const auto& f : failed) {
                if ((f - u).cwiseAbs().maxCoeff() < 0.01) {
                    return -std::numeric_limits<double>::infinity();
                }
            }
            return acquisition(u);
        };

        bool done = false;
        for (int attempt = 0; attempt < 2 && !done; ++attempt) {
            const Selection sel = maximize_acquisition(
                scorer, domain, visited,
                derive_seed(cfg.seed, 7919ULL * static_cast<std::uint64_t>(it) + static_cast<std::uint64_t>(attempt)),
                cfg.search);
            try {
                const double y = evaluate(sel.natural, sel.unit, sel.grid_index);
                record(it, sel.natural, sel.unit, sel.grid_index, y, sel.value, fit.summary);
                done = true;
            } catch (const Error& e) {
                if (!is_recoverable(e)) {
                    throw;
                }
                trace.failures.push_back("iteration " + std::to_string(it) + ": " + e.what());
                // Exclude the failed candidate so the retry takes the next best.
                if (sel.grid_index) {
                    visited.grid_indices.push_back(*sel.grid_index);
                } else {
                    failed.push_back(sel.unit);
                }
                if (domain.is_grid() && visited.grid_indices.size() >= domain.grid_size()) {
                    break;
                }
            }
        }
        if (!done) {
            trace.aborted = true;
            break;
        }
    }
    trace.evaluation_count = objective.evaluations() - calls_before;
    return trace;
}

}  // namespace emtbo
