#include "emtbo/baselines.hpp"
#include "emtbo/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace emtbo;

namespace {

ScaledObjective unit_line(std::function<double(double)> f, Sense sense = Sense::Minimize) {
    return ScaledObjective([f = std::move(f)](std::span<const double> x) { return f(x[0]); },
                           Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 1.0, sense);
}

void check_trace(const BaselineResult& r) {
    REQUIRE(r.xs.size() == static_cast<std::size_t>(r.evaluations));
    REQUIRE(r.ys.size() == r.xs.size());
    REQUIRE(r.incumbent_trace.size() == r.xs.size());
    double best = r.ys.front();
    for (std::size_t i = 0; i < r.ys.size(); ++i) {
        best = std::min(best, r.ys[i]);
        CHECK(r.incumbent_trace[i] == best);
    }
    CHECK(r.best_y == best);
}

// Narrow global well at 0.8 (width 0.01) beside a broad local one at 0.25 (width 0.1).
double two_well(double x) {
    return -1.2 * std::exp(-0.5 * std::pow((x - 0.8) / 0.01, 2)) - std::exp(-0.5 * std::pow((x - 0.25) / 0.1, 2));
}

}  // namespace

TEST_CASE("random search with one evaluation returns it") {
    auto obj = unit_line([](double x) { return x * x; });
    const BaselineResult r = random_search(obj, 1, 3);
    CHECK(r.evaluations == 1);
    CHECK(obj.evaluations() == 1);
    CHECK(r.best_y == r.ys[0]);
    CHECK(r.best_x == r.xs[0]);
    CHECK_THROWS_AS(random_search(obj, 0, 3), Error);
}

TEST_CASE("random search is reproducible") {
    auto a = unit_line([](double x) { return std::sin(9.0 * x); });
    auto b = unit_line([](double x) { return std::sin(9.0 * x); });
    const BaselineResult ra = random_search(a, 40, 77);
    const BaselineResult rb = random_search(b, 40, 77);
    CHECK(ra.xs == rb.xs);
    CHECK(ra.incumbent_trace == rb.incumbent_trace);
    check_trace(ra);
}

TEST_CASE("random search concentrates near the peak of a concave parabola") {
    // Order statistics: missing [0.45, 0.55] with 1000 draws has probability 0.9^1000.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto obj = unit_line([](double x) { return -(x - 0.5) * (x - 0.5); }, Sense::Maximize);
        const BaselineResult r = random_search(obj, 1000, seed);
        CHECK(std::abs(r.best_x[0] - 0.5) < 0.05);
        CHECK(r.evaluations == 1000);
    }
}

TEST_CASE("nelder-mead solves a shifted parabola") {
    const VectorObjective f = [](const Eigen::VectorXd& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
    const BaselineResult r = nelder_mead(f, Eigen::VectorXd::Zero(1), 50);
    CHECK(std::abs(r.best_x[0] - 3.0) < 1e-3);
    CHECK(r.evaluations <= 50);
    check_trace(r);
}

TEST_CASE("nelder-mead stops on the diameter criterion at a minimum") {
    const VectorObjective f = [](const Eigen::VectorXd& x) { return (x.array() - 0.4).square().sum(); };
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(2, 0.4);
    const BaselineResult r = nelder_mead(f, x0, 1000);
    CHECK(r.converged);
    CHECK(r.evaluations < 1000);
    CHECK((r.best_x - x0).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(r.best_y == 0.0);
}

TEST_CASE("nelder-mead reaches the minimum of convex quadratics up to three dimensions") {
    Rng rng(5);
    for (int d = 1; d <= 3; ++d) {
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::MatrixXd a = Eigen::MatrixXd::Random(d, d);
            const Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(d, d);
            Eigen::VectorXd c(d);
            for (int j = 0; j < d; ++j) {
                c[j] = -1.0 + 2.0 * uniform01(rng);
            }
            const VectorObjective f = [&](const Eigen::VectorXd& x) { return (x - c).dot(h * (x - c)); };
            const BaselineResult r = nelder_mead(f, Eigen::VectorXd::Zero(d), 2000);
            CAPTURE(d);
            CHECK(r.converged);
            CHECK((r.best_x - c).norm() < 1e-4);
            check_trace(r);
        }
    }
}

TEST_CASE("nelder-mead honours the budget and the box") {
    int calls = 0;
    auto obj = unit_line([&calls](double x) {
        ++calls;
        return -x;
    });
    const BaselineResult r = nelder_mead(obj, Eigen::VectorXd::Constant(1, 0.5), 7);
    CHECK(r.evaluations == 7);
    CHECK(calls == 7);
    CHECK_FALSE(r.converged);
    for (const auto& x : r.xs) {
        CHECK(x[0] >= 0.0);
        CHECK(x[0] <= 1.0);
    }
    CHECK(r.best_x[0] > 0.5);
    CHECK_THROWS_AS(nelder_mead(obj, Eigen::VectorXd::Constant(1, 0.5), 1), Error);
}

TEST_CASE("visiting distribution is symmetric and heavier-tailed when hot") {
    Rng rng(1);
    int pos = 0;
    int wide_hot = 0;
    int wide_cold = 0;
    for (int i = 0; i < 20000; ++i) {
        const double v = gsa_visit(5230.0, 2.62, rng);
        pos += v > 0.0 ? 1 : 0;
        wide_hot += std::abs(v) > 1.0 ? 1 : 0;
        wide_cold += std::abs(gsa_visit(1.0, 2.62, rng)) > 1.0 ? 1 : 0;
    }
    CHECK(std::abs(pos - 10000) < 400);
    CHECK(wide_hot > wide_cold);
}

TEST_CASE("dual annealing with one evaluation returns the initial point") {
    auto obj = unit_line([](double x) { return x; });
    const BaselineResult r = dual_annealing(obj, 1, 9);
    CHECK(r.evaluations == 1);
    CHECK(r.best_x == r.xs[0]);
    CHECK_FALSE(r.converged);
    CHECK_THROWS_AS(dual_annealing(obj, 0, 9), Error);
}

TEST_CASE("dual annealing is reproducible and stays in the box") {
    auto a = unit_line(two_well);
    auto b = unit_line(two_well);
    const BaselineResult ra = dual_annealing(a, 200, 31);
    const BaselineResult rb = dual_annealing(b, 200, 31);
    CHECK(ra.xs == rb.xs);
    CHECK(ra.evaluations <= 200);
    CHECK(a.evaluations() == ra.evaluations);
    // 200 evaluations cannot cover the 1000-iteration schedule.
    CHECK_FALSE(ra.converged);
    for (const auto& x : ra.xs) {
        CHECK(x[0] >= 0.0);
        CHECK(x[0] <= 1.0);
    }
    check_trace(ra);
}

TEST_CASE("dual annealing finds the narrow global well") {
    // Dense-grid oracle locates the global well.
    double oracle_x = 0.0;
    double oracle_y = 0.0;
    for (int i = 0; i <= 100000; ++i) {
        const double x = i / 100000.0;
        if (two_well(x) < oracle_y) {
            oracle_y = two_well(x);
            oracle_x = x;
        }
    }
    REQUIRE(std::abs(oracle_x - 0.8) < 1e-4);
    REQUIRE(two_well(0.25) > oracle_y + 0.1);

    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto obj = unit_line(two_well);
        const BaselineResult r = dual_annealing(obj, 500, seed);
        CHECK(r.evaluations <= 500);
        hits += std::abs(r.best_x[0] - oracle_x) < 0.03 ? 1 : 0;
    }
    CHECK(hits >= 90);
}
