#include "emtbo/baselines.hpp"

#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace emtbo {

namespace {

// Counts evaluations against a hard budget and keeps the incumbent trace.
class Tracker {
public:
    Tracker(const VectorObjective& f, long budget, std::string method) : f_(f), budget_(budget) {
        if (budget < 1) {
            throw Error(Errc::invalid_argument, "evaluation budget must be at least 1");
        }
        result_.method = std::move(method);
        result_.best_y = std::numeric_limits<double>::infinity();
    }

    [[nodiscard]] bool exhausted() const noexcept { return result_.evaluations >= budget_; }
    [[nodiscard]] long remaining() const noexcept { return budget_ - result_.evaluations; }

    std::optional<double> operator()(const Eigen::VectorXd& x) {
        if (exhausted()) {
            return std::nullopt;
        }
        const double y = f_(x);
        ++result_.evaluations;
        result_.xs.push_back(x);
        result_.ys.push_back(y);
        if (y < result_.best_y || result_.evaluations == 1) {
            result_.best_y = y;
            result_.best_x = x;
        }
        result_.incumbent_trace.push_back(result_.best_y);
        return y;
    }

    BaselineResult& result() noexcept { return result_; }

private:
    const VectorObjective& f_;
    long budget_;
    BaselineResult result_;
};

Eigen::VectorXd reflect_unit(Eigen::VectorXd x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        double v = std::fmod(std::abs(x[j]), 2.0);
        x[j] = v > 1.0 ? 2.0 - v : v;
    }
    return x;
}

// Bounded simplex core shared by the public overloads. Returns true when the
// diameter criterion fired.
bool run_simplex(Tracker& eval, const Eigen::VectorXd& x0, const NelderMeadDomain& domain,
                 const NelderMeadOptions& opt) {
    const Eigen::Index d = x0.size();
    Eigen::VectorXd width = Eigen::VectorXd::Ones(d);
    if (domain.width) {
        width = *domain.width;
    } else if (domain.lower && domain.upper) {
        width = *domain.upper - *domain.lower;
    }
    auto clip = [&](Eigen::VectorXd x) {
        if (domain.lower) {
            x = x.cwiseMax(*domain.lower);
        }
        if (domain.upper) {
            x = x.cwiseMin(*domain.upper);
        }
        return x;
    };

    std::vector<Eigen::VectorXd> simplex;
    std::vector<double> values;
    auto add_vertex = [&](Eigen::VectorXd x) {
        const auto y = eval(x);
        if (!y) {
            return false;
        }
        simplex.push_back(std::move(x));
        values.push_back(*y);
        return true;
    };
    if (!add_vertex(clip(x0))) {
        return false;
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::VectorXd x = clip(x0);
        const double step = opt.initial_step * width[j];
        x[j] += step;
        x = clip(x);
        if (x[j] == simplex.front()[j]) {
            x[j] -= step;  // the forward vertex would sit on the bound
            x = clip(x);
        }
        if (!add_vertex(std::move(x))) {
            return false;
        }
    }

    const auto n = static_cast<std::size_t>(d);
    std::vector<std::size_t> order(n + 1);
    while (true) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        {
            std::vector<Eigen::VectorXd> s2;
            std::vector<double> v2;
            for (std::size_t i : order) {
                s2.push_back(simplex[i]);
                v2.push_back(values[i]);
            }
            simplex = std::move(s2);
            values = std::move(v2);
        }

        double diameter = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            diameter = std::max(diameter, ((simplex[i] - simplex[0]).array() / width.array()).abs().maxCoeff());
        }
        if (diameter < opt.tolerance) {
            return true;
        }
        if (eval.exhausted()) {
            return false;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < n; ++i) {
            centroid += simplex[i];
        }
        centroid /= static_cast<double>(n);
        const Eigen::VectorXd& worst = simplex[n];

        const Eigen::VectorXd xr = clip(centroid + opt.reflection * (centroid - worst));
        const auto fr = eval(xr);
        if (!fr) {
            return false;
        }
        if (*fr < values[0]) {
            const Eigen::VectorXd xe = clip(centroid + opt.expansion * (xr - centroid));
            const auto fe = eval(xe);
            if (fe && *fe < *fr) {
                simplex[n] = xe;
                values[n] = *fe;
            } else {
                simplex[n] = xr;
                values[n] = *fr;
            }
            continue;
        }
        if (*fr < values[n - 1]) {
            simplex[n] = xr;
            values[n] = *fr;
            continue;
        }
        bool accepted = false;
        if (*fr < values[n]) {
            const Eigen::VectorXd xc = clip(centroid + opt.contraction * (xr - centroid));
            const auto fc = eval(xc);
            if (!fc) {
                return false;
            }
            if (*fc <= *fr) {
                simplex[n] = xc;
                values[n] = *fc;
                accepted = true;
            }
        } else {
            const Eigen::VectorXd xcc = clip(centroid + opt.contraction * (worst - centroid));
            const auto fcc = eval(xcc);
            if (!fcc) {
                return false;
            }
            if (*fcc < values[n]) {
                simplex[n] = xcc;
                values[n] = *fcc;
                accepted = true;
            }
        }
        if (!accepted) {
            for (std::size_t i = 1; i <= n; ++i) {
                simplex[i] = clip(simplex[0] + opt.shrink * (simplex[i] - simplex[0]));
                const auto fi = eval(simplex[i]);
                if (!fi) {
                    return false;
                }
                values[i] = *fi;
            }
        }
    }
}

VectorObjective unit_objective(ScaledObjective& objective) {
    return [&objective](const Eigen::VectorXd& x) { return objective.evaluate(x); };
}

}  // namespace

BaselineResult random_search(ScaledObjective& objective, long budget, std::uint64_t seed) {
    const VectorObjective f = unit_objective(objective);
    Tracker eval(f, budget, "random");
    Rng rng(seed);
    const Eigen::Index d = objective.dimension();
    while (!eval.exhausted()) {
        Eigen::VectorXd x(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            x[j] = uniform01(rng);
        }
        eval(x);
    }
    eval.result().converged = true;
    return std::move(eval.result());
}

BaselineResult nelder_mead(const VectorObjective& f, const Eigen::VectorXd& x0, long budget,
                           const NelderMeadDomain& domain, const NelderMeadOptions& options) {
    if (x0.size() < 1) {
        throw Error(Errc::invalid_argument, "Nelder-Mead needs at least one dimension");
    }
    if (budget < x0.size() + 1) {
        throw Error(Errc::invalid_argument, "Nelder-Mead budget must cover the initial simplex");
    }
    Tracker eval(f, budget, "nelder-mead");
    eval.result().converged = run_simplex(eval, x0, domain, options);
    return std::move(eval.result());
}

BaselineResult nelder_mead(ScaledObjective& objective, const Eigen::VectorXd& x0_unit, long budget,
                           const NelderMeadOptions& options) {
    const Eigen::Index d = objective.dimension();
    NelderMeadDomain domain{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), std::nullopt};
    return nelder_mead(unit_objective(objective), x0_unit, budget, domain, options);
}

double gsa_visit(double temperature, double qv, Rng& rng) {
    const double pi = std::numbers::pi;
    const double factor1 = std::exp(std::log(temperature) / (qv - 1.0));
    const double factor2 = std::exp((4.0 - qv) * std::log(qv - 1.0));
    const double factor3 = std::exp((2.0 - qv) * std::log(2.0) / (qv - 1.0));
    const double factor4 = std::sqrt(pi) * factor1 * factor2 / (factor3 * (3.0 - qv));
    const double factor5 = 1.0 / (qv - 1.0) - 0.5;
    const double d1 = 2.0 - factor5;
    const double factor6 = pi * (1.0 - factor5) / std::sin(pi * (1.0 - factor5)) / std::exp(std::lgamma(d1));
    const double sigmax = std::exp(-(qv - 1.0) * std::log(factor6 / factor4) / (3.0 - qv));
    const double x = sigmax * standard_normal(rng);
    const double y = standard_normal(rng);
    const double den = std::exp((qv - 1.0) * std::log(std::abs(y)) / (3.0 - qv));
    const double v = x / den;
    if (!std::isfinite(v) || std::abs(v) > 1e8) {
        return std::copysign(1e8 * uniform01(rng), std::isfinite(v) ? v : 1.0);
    }
    return v;
}

BaselineResult dual_annealing(const VectorObjective& f, Eigen::Index dim, long budget, std::uint64_t seed,
                              const DualAnnealingOptions& opt) {
    if (dim < 1) {
        throw Error(Errc::invalid_argument, "dual annealing needs at least one dimension");
    }
    Tracker eval(f, budget, "dual-annealing");
    Rng rng(seed);
    auto random_point = [&] {
        Eigen::VectorXd x(dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            x[j] = uniform01(rng);
        }
        return x;
    };

    const long local_budget =
        budget > dim + 2 ? static_cast<long>(std::floor(opt.local_fraction * static_cast<double>(budget))) : 0;
    const long global_budget = budget - local_budget;

    Eigen::VectorXd current = random_point();
    double e_current = *eval(current);
    const double qv = opt.visiting_shape;
    const double qa = opt.acceptance_shape;
    const double t1 = std::exp((qv - 1.0) * std::log(2.0)) - 1.0;
    bool schedule_complete = true;
    for (int i = 0; i < opt.max_iterations; ++i) {
        if (eval.result().evaluations >= global_budget) {
            schedule_complete = false;
            break;
        }
        const double s = static_cast<double>(i) + 2.0;
        const double t2 = std::exp((qv - 1.0) * std::log(s)) - 1.0;
        const double temperature = opt.initial_temperature * t1 / t2;
        if (temperature < opt.initial_temperature * opt.restart_temperature_ratio) {
            current = random_point();
            const auto e = eval(current);
            if (!e) {
                break;
            }
            e_current = *e;
            continue;
        }
        const double acceptance_temperature = temperature / static_cast<double>(i + 1);
        for (Eigen::Index j = 0; j < 2 * dim; ++j) {
            if (eval.result().evaluations >= global_budget) {
                break;
            }
            Eigen::VectorXd candidate = current;
            if (j < dim) {
                for (Eigen::Index k = 0; k < dim; ++k) {
                    candidate[k] += gsa_visit(temperature, qv, rng);
                }
            } else {
                candidate[j - dim] += gsa_visit(temperature, qv, rng);
            }
            candidate = reflect_unit(std::move(candidate));
            const double e = *eval(candidate);
            const double r = uniform01(rng);
            if (e < e_current) {
                current = std::move(candidate);
                e_current = e;
                continue;
            }
            const double pqv_temp = 1.0 - (1.0 - qa) * (e - e_current) / acceptance_temperature;
            const double pqv = pqv_temp <= 0.0 ? 0.0 : std::exp(std::log(pqv_temp) / (1.0 - qa));
            if (r <= pqv) {
                current = std::move(candidate);
                e_current = e;
            }
        }
    }

    if (!eval.exhausted()) {
        NelderMeadOptions nm;
        nm.initial_step = opt.local_initial_step;
        NelderMeadDomain box{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim), std::nullopt};
        const Eigen::VectorXd start = eval.result().best_x;
        if (eval.remaining() >= dim + 1) {
            run_simplex(eval, start, box, nm);
        }
    }
    eval.result().converged = schedule_complete;
    return std::move(eval.result());
}

BaselineResult dual_annealing(ScaledObjective& objective, long budget, std::uint64_t seed,
                              const DualAnnealingOptions& options) {
    return dual_annealing(unit_objective(objective), objective.dimension(), budget, seed, options);
}

}  // namespace emtbo
