#include "emtbo/error.hpp"
#include "emtbo/hyper_inference.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace emtbo;

namespace {

Hyperparams theta(double sigma, double l, double noise = 1e-6) {
    Hyperparams t;
    t.signal_amplitude = sigma;
    t.lengthscales = Eigen::VectorXd::Constant(1, l);
    t.noise_variance = noise;
    return t;
}

Dataset synthetic(std::uint64_t seed, Eigen::Index n, double sigma, double l, bool matern = false) {
    Rng rng(seed);
    const Eigen::MatrixXd x = testsupport::random_points(rng, n, 1);
    return Dataset(x, testsupport::gp_draw(rng, x, sigma, l, matern));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double lml(const Dataset& d, const Hyperparams& t) {
    return log_marginal_likelihood(d, KernelKind::SquaredExponential, t).value;
}

}  // namespace

TEST_CASE("configuration validation") {
    GradAscentConfig g;
    g.steps = 0;
    CHECK_THROWS_AS(g.validate(), Error);
    g.steps = 1;
    g.step_size = 0.0;
    CHECK_THROWS_AS(g.validate(), Error);

    McmcConfig m;
    m.sample_count = 0;
    CHECK_THROWS_AS(m.validate(), Error);

    PriorSpec p;
    p.amplitude = {0.0, 1.0};
    CHECK_THROWS_AS(p.validate(), Error);
    p.amplitude = {2.0, 1.0};
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("ml estimate never lowers the likelihood and runs the fixed step count") {
    const Dataset d = synthetic(1, 15, 1.0, 0.3);
    for (int steps : {1, 5, 100}) {
        GradAscentConfig cfg;
        cfg.steps = steps;
        const auto init = theta(2.0, 0.8);
        const auto r = ml_estimate(d, KernelKind::SquaredExponential, init, cfg);
        CHECK(r.steps_taken == steps);
        CHECK(r.objective >= lml(d, init));
        CHECK(r.objective == doctest::Approx(lml(d, r.theta)).epsilon(1e-12));
        CHECK(r.theta.signal_amplitude > 0.0);
        CHECK(r.theta.lengthscales[0] > 0.0);
    }
    CHECK_THROWS_AS(ml_estimate(Dataset(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)),
                                KernelKind::SquaredExponential, theta(1.0, 0.5)),
                    Error);
}

TEST_CASE("ml estimate leaves a stationary point unchanged") {
    // Stationary point located independently: alternate bisection on each
    // gradient component until both vanish.
    const Dataset d = synthetic(2, 12, 1.0, 0.4);
    Hyperparams t = theta(1.0, 0.4);
    const auto grad = [&](const Hyperparams& h) {
        return log_marginal_likelihood(d, KernelKind::SquaredExponential, h).gradient;
    };
    const auto root = [&](double& param, int component) {
        double lo = param / 4.0;
        double hi = param * 4.0;
        for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
            param = 0.5 * (lo + hi);
            (grad(t)[component] > 0.0 ? lo : hi) = param;
        }
    };
    for (int sweep = 0; sweep < 200; ++sweep) {
        root(t.signal_amplitude, 0);
        root(t.lengthscales[0], 1);
    }
    REQUIRE(grad(t).norm() < 1e-8);

    const auto r = ml_estimate(d, KernelKind::SquaredExponential, t);
    CHECK(r.steps_taken == 100);
    CHECK(std::abs(r.theta.lengthscales[0] - t.lengthscales[0]) < 1e-9);
    CHECK(std::abs(r.theta.signal_amplitude - t.signal_amplitude) < 1e-9);
}

TEST_CASE("ml estimate recovers the generating lengthscale") {
    GradAscentConfig cfg;
    cfg.steps = 300;
    cfg.step_size = 0.01;
    std::vector<double> ls;
    for (std::uint64_t seed = 10; seed < 21; ++seed) {
        const Dataset d = synthetic(seed, 30, 1.0, 0.3);
        ls.push_back(ml_estimate(d, KernelKind::SquaredExponential, theta(1.0, 1.0), cfg).theta.lengthscales[0]);
    }
    const double m = median(ls);
    CHECK(m >= 0.15);
    CHECK(m <= 0.6);
}

TEST_CASE("map estimate stays in the prior box and agrees with ml in the interior") {
    const Dataset d = synthetic(3, 20, 1.0, 0.4);
    PriorSpec priors;
    GradAscentConfig cfg;
    cfg.steps = 200;
    cfg.step_size = 0.01;
    const auto init = theta(1.0, 0.5);
    const auto ml = ml_estimate(d, KernelKind::SquaredExponential, init, cfg);
    REQUIRE(priors.contains(ml.theta));
    const auto map = map_estimate(d, KernelKind::SquaredExponential, priors, init, cfg);
    CHECK(std::abs(map.theta.signal_amplitude - ml.theta.signal_amplitude) < 1e-6);
    CHECK(std::abs(map.theta.lengthscales[0] - ml.theta.lengthscales[0]) < 1e-6);
}

TEST_CASE("map estimate clips to an active upper bound") {
    // A very smooth draw pushes the ML lengthscale far above the prior's upper end.
    const Dataset d = synthetic(4, 10, 1.0, 3.0);
    PriorSpec priors;
    GradAscentConfig cfg;
    cfg.steps = 300;
    cfg.step_size = 0.05;
    const auto ml = ml_estimate(d, KernelKind::SquaredExponential, theta(1.0, 0.9), cfg);
    REQUIRE(ml.theta.lengthscales[0] > priors.lengthscale.upper);
    const auto map = map_estimate(d, KernelKind::SquaredExponential, priors, theta(1.0, 0.9), cfg);
    CHECK(map.theta.lengthscales[0] == doctest::Approx(priors.lengthscale.upper));
    CHECK(priors.contains(map.theta));
}

TEST_CASE("map estimate rejects an initial point outside the prior") {
    const Dataset d = synthetic(5, 8, 1.0, 0.4);
    try {
        (void)map_estimate(d, KernelKind::SquaredExponential, PriorSpec{}, theta(10.0, 0.5));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::out_of_support);
    }
}

TEST_CASE("map estimate recovers a lengthscale inside the prior") {
    GradAscentConfig cfg;
    cfg.steps = 300;
    cfg.step_size = 0.01;
    std::vector<double> ls;
    for (std::uint64_t seed = 40; seed < 51; ++seed) {
        const Dataset d = synthetic(seed, 30, 1.0, 0.5);
        ls.push_back(map_estimate(d, KernelKind::SquaredExponential, PriorSpec{}, theta(1.0, 0.2), cfg)
                         .theta.lengthscales[0]);
    }
    const double m = median(ls);
    CHECK(m >= 0.25);
    CHECK(m <= 0.9);
}

TEST_CASE("prior-only chain is uniform over the prior box") {
    PriorSpec priors;
    McmcConfig cfg;
    cfg.sample_count = 10000;
    cfg.burn_in = 100;
    // Independence between retained draws: wide proposals and thinning.
    cfg.proposal_scale = {priors.amplitude.width(), priors.lengthscale.width()};
    cfg.thinning = 10;
    cfg.seed = 99;
    const auto r = mcmc_sample(Dataset(1), KernelKind::SquaredExponential, priors, cfg);
    REQUIRE(r.samples.size() == 10000);
    std::vector<double> sig;
    std::vector<double> len;
    for (const auto& s : r.samples) {
        REQUIRE(priors.contains(s));
        sig.push_back(s.signal_amplitude);
        len.push_back(s.lengthscales[0]);
    }
    const auto ucdf = [](UniformBound b) {
        return [b](double v) { return std::clamp((v - b.lower) / b.width(), 0.0, 1.0); };
    };
    const double crit = testsupport::ks_critical_1pct(sig.size());
    CHECK(testsupport::ks_statistic(sig, ucdf(priors.amplitude)) < crit);
    CHECK(testsupport::ks_statistic(len, ucdf(priors.lengthscale)) < crit);
}

TEST_CASE("chains are reproducible under a fixed seed and stay in support") {
    const Dataset d = synthetic(6, 10, 1.0, 0.4);
    PriorSpec priors;
    McmcConfig cfg;
    cfg.seed = 1234;
    const auto a = mcmc_sample(d, KernelKind::Matern52, priors, cfg);
    const auto b = mcmc_sample(d, KernelKind::Matern52, priors, cfg);
    REQUIRE(a.samples.size() == 100);
    CHECK(a.samples == b.samples);
    CHECK(a.acceptance_rate == b.acceptance_rate);
    for (const auto& s : a.samples) {
        CHECK(priors.contains(s));
    }
    cfg.seed = 1235;
    CHECK_FALSE(mcmc_sample(d, KernelKind::Matern52, priors, cfg).samples == a.samples);
}

TEST_CASE("chain concentrates where a dense posterior grid puts its mass") {
    const Dataset d = synthetic(7, 40, 1.0, 0.4);
    PriorSpec priors;
    priors.amplitude = {0.5, 2.0};

    // Oracle: posterior over l on a dense grid, amplitude marginalized by
    // summation over its own grid.
    const int nl = 400;
    const int ns = 60;
    std::vector<double> lw(nl, 0.0);
    std::vector<double> lgrid(nl);
    double top = -1e300;
    std::vector<std::vector<double>> lp(nl, std::vector<double>(ns));
    for (int i = 0; i < nl; ++i) {
        lgrid[static_cast<std::size_t>(i)] = priors.lengthscale.lower + priors.lengthscale.width() * (i + 0.5) / nl;
        for (int j = 0; j < ns; ++j) {
            const double s = priors.amplitude.lower + priors.amplitude.width() * (j + 0.5) / ns;
            lp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                log_posterior(d, KernelKind::SquaredExponential, priors, theta(s, lgrid[static_cast<std::size_t>(i)]));
            top = std::max(top, lp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
    }
    double total = 0.0;
    for (int i = 0; i < nl; ++i) {
        for (int j = 0; j < ns; ++j) {
            lw[static_cast<std::size_t>(i)] += std::exp(lp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - top);
        }
        total += lw[static_cast<std::size_t>(i)];
    }
    double acc = 0.0;
    double grid_median = 0.0;
    for (int i = 0; i < nl; ++i) {
        acc += lw[static_cast<std::size_t>(i)];
        if (acc >= 0.5 * total) {
            grid_median = lgrid[static_cast<std::size_t>(i)];
            break;
        }
    }
    REQUIRE(grid_median >= 0.3);
    REQUIRE(grid_median <= 0.5);

    McmcConfig cfg;
    cfg.sample_count = 2000;
    cfg.burn_in = 500;
    cfg.seed = 8;
    const auto r = mcmc_sample(d, KernelKind::SquaredExponential, priors, cfg);
    std::vector<double> ls;
    for (const auto& s : r.samples) {
        ls.push_back(s.lengthscales[0]);
    }
    const double m = median(ls);
    CHECK(m >= 0.3);
    CHECK(m <= 0.5);
    CHECK(std::abs(m - grid_median) < 0.05);
}

TEST_CASE("metropolis rule keeps a two-state chain in detailed balance") {
    // Target pi = (0.3, 0.7); proposal always flips the state.
    const double log_pi[2] = {std::log(0.3), std::log(0.7)};
    Rng rng(2024);
    int state = 0;
    long visits[2] = {0, 0};
    const long steps = 100000;
    for (long i = 0; i < steps; ++i) {
        const int proposal = 1 - state;
        if (metropolis_accept(log_pi[proposal] - log_pi[state], uniform01(rng))) {
            state = proposal;
        }
        ++visits[state];
    }
    CHECK(static_cast<double>(visits[0]) / steps == doctest::Approx(0.3).epsilon(0.02 / 0.3));
    CHECK(metropolis_accept(0.0, 0.999));
    CHECK_FALSE(metropolis_accept(-1.0, std::exp(-1.0)));
    CHECK(metropolis_accept(-1.0, std::exp(-1.0) * 0.999));
}

TEST_CASE("log posterior is minus infinity outside support and prior-only on empty data") {
    PriorSpec priors;
    CHECK(std::isinf(log_posterior(Dataset(1), KernelKind::Matern52, priors, theta(7.0, 0.5))));
    const double inside = log_posterior(Dataset(1), KernelKind::Matern52, priors, theta(1.0, 0.5));
    CHECK(inside == doctest::Approx(-std::log(priors.amplitude.width()) - std::log(priors.lengthscale.width())));
}
