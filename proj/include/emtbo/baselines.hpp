#pragma once

#include "emtbo/objectives.hpp"
#include "emtbo/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace emtbo {

// All baselines minimize. Points are unit-box coordinates when run against a
// ScaledObjective.
struct BaselineResult {
    std::string method;
    Eigen::VectorXd best_x;
    double best_y = 0.0;
    long evaluations = 0;
    std::vector<Eigen::VectorXd> xs;       // every evaluated point, in order
    std::vector<double> ys;
    std::vector<double> incumbent_trace;   // best-so-far after each evaluation
    bool converged = false;
};

using VectorObjective = std::function<double(const Eigen::VectorXd&)>;

BaselineResult random_search(ScaledObjective& objective, long budget, std::uint64_t seed);

struct NelderMeadOptions {
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
    double initial_step = 0.05;  // fraction of the width per coordinate
    double tolerance = 1e-6;     // simplex diameter, fraction of the width
};

// Optional bounds clip every vertex; `width` defaults to bounds width or 1.
struct NelderMeadDomain {
    std::optional<Eigen::VectorXd> lower;
    std::optional<Eigen::VectorXd> upper;
    std::optional<Eigen::VectorXd> width;
};

/// Downhill simplex with the standard coefficients. Stops at the budget or
/// when the simplex diameter falls below the tolerance (converged).
BaselineResult nelder_mead(const VectorObjective& f, const Eigen::VectorXd& x0, long budget,
                           const NelderMeadDomain& domain = {}, const NelderMeadOptions& options = {});
BaselineResult nelder_mead(ScaledObjective& objective, const Eigen::VectorXd& x0_unit, long budget,
                           const NelderMeadOptions& options = {});

struct DualAnnealingOptions {
    double initial_temperature = 5230.0;
    double visiting_shape = 2.62;
    double acceptance_shape = -5.0;
    double restart_temperature_ratio = 2e-5;
    int max_iterations = 1000;
    // Share of the budget reserved for the terminal Nelder-Mead refinement.
    double local_fraction = 0.4;
    double local_initial_step = 0.02;
};

/// Sample from the distorted Cauchy-Lorentz visiting distribution.
double gsa_visit(double temperature, double visiting_shape, Rng& rng);

/// Generalized simulated annealing in the unit box with reflection at the
/// bounds, followed by bounded Nelder-Mead refinement with the reserved budget.
BaselineResult dual_annealing(const VectorObjective& f, Eigen::Index dim, long budget, std::uint64_t seed,
                              const DualAnnealingOptions& options = {});
BaselineResult dual_annealing(ScaledObjective& objective, long budget, std::uint64_t seed,
                              const DualAnnealingOptions& options = {});

}  // namespace emtbo
