#pragma once

#include "emtbo/acquisition.hpp"
#include "emtbo/emt.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emtbo {

// Expensive function in natural (unscaled) coordinates.
using ObjectiveFn = std::function<double(std::span<const double>)>;

// Lookup-table objective over the (droop k, injection angle phi) grid.
class GridObjective {
public:
    GridObjective(std::vector<double> k_axis, std::vector<double> phi_axis, Eigen::MatrixXd risk);

    [[nodiscard]] const std::vector<double>& k_axis() const noexcept { return k_axis_; }
    [[nodiscard]] const std::vector<double>& phi_axis() const noexcept { return phi_axis_; }
    [[nodiscard]] const Eigen::MatrixXd& risk() const noexcept { return risk_; }

    // Exact node lookup; off-grid queries throw Error(lookup_miss).
    [[nodiscard]] double lookup(double k, double phi) const;
    [[nodiscard]] double operator()(std::span<const double> x) const;

    struct Node {
        std::size_t k_index = 0;
        std::size_t phi_index = 0;
        double value = 0.0;
    };
    [[nodiscard]] Node minimum() const;

    void write_csv(std::ostream& out) const;

private:
    std::vector<double> k_axis_;
    std::vector<double> phi_axis_;
    Eigen::MatrixXd risk_;  // rows: k, cols: phi
};

/// Parses `k,phi,risk` CSV (header required, '.' decimal point, no locale);
/// the rows must form the full Cartesian product of the distinct k and phi values.
GridObjective parse_grid_objective(std::istream& in, const std::string& source = "<stream>");
GridObjective load_grid_objective(const std::filesystem::path& file);

struct SyntheticRiskSpec {
    std::size_t k_count = 9;
    double k_max = 2.0;
    std::size_t phi_count = 20;
    double phi_max = 3.14159265358979323846;
    // Designated minimum: node nearest to these coordinates.
    double k_min_at = 1.75;
    double phi_min_at = 1.09;
    double minimum = 0.06488;
    double maximum = 0.09;
};

/// Smooth two-bowl risk surface on the grid: a broad global bowl at the
/// designated node and a shallower secondary bowl, affinely mapped so the
/// designated node holds `minimum` and the largest entry equals `maximum`.
GridObjective make_synthetic_risk_grid(const SyntheticRiskSpec& spec = {});

// Wraps an objective with unit-box input scaling, output division, optional
// sign flip (maximization problems become minimization), an evaluation
// counter and an optional hard budget.
class ScaledObjective {
public:
    ScaledObjective(ObjectiveFn fn, Eigen::VectorXd lower, Eigen::VectorXd upper, double divisor = 1.0,
                    Sense sense = Sense::Minimize);

    [[nodiscard]] Eigen::Index dimension() const noexcept { return lower_.size(); }
    [[nodiscard]] Sense sense() const noexcept { return sense_; }
    [[nodiscard]] double divisor() const noexcept { return divisor_; }
    [[nodiscard]] const Eigen::VectorXd& lower() const noexcept { return lower_; }
    [[nodiscard]] const Eigen::VectorXd& upper() const noexcept { return upper_; }

    [[nodiscard]] Eigen::VectorXd to_unit(const Eigen::Ref<const Eigen::VectorXd>& natural) const;
    [[nodiscard]] Eigen::VectorXd from_unit(const Eigen::Ref<const Eigen::VectorXd>& unit) const;
    // Scaled (minimization) value <-> natural objective value.
    [[nodiscard]] double scale_output(double natural) const noexcept;
    [[nodiscard]] double unscale_output(double scaled) const noexcept;

    /// Evaluates at a unit-box point; returns the scaled minimization value.
    double evaluate(const Eigen::Ref<const Eigen::VectorXd>& unit_x);
    /// Evaluates at a natural-coordinate point; returns the scaled value.
    double evaluate_natural(const Eigen::Ref<const Eigen::VectorXd>& natural_x);

    [[nodiscard]] long evaluations() const noexcept { return counter_.load(); }
    void set_budget(std::optional<long> budget) noexcept { budget_ = budget; }
    [[nodiscard]] std::optional<long> budget() const noexcept { return budget_; }
    [[nodiscard]] bool budget_exhausted() const noexcept { return budget_ && counter_.load() >= *budget_; }

private:
    ObjectiveFn fn_;
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
    double divisor_ = 1.0;
    Sense sense_ = Sense::Minimize;
    std::atomic<long> counter_{0};
    std::optional<long> budget_;
};

// Which stochastic inputs the energization objective exposes.
enum class EnergizationInputs { SwitchingTime, Full };

struct EnergizationProblem {
    emt::CircuitParams circuit = emt::CircuitParams::defaults();
    emt::SimulationOptions simulation;
    EnergizationInputs inputs = EnergizationInputs::SwitchingTime;

    [[nodiscard]] Eigen::Index dimension() const noexcept { return inputs == EnergizationInputs::Full ? 3 : 1; }
    [[nodiscard]] Eigen::VectorXd lower() const;
    [[nodiscard]] Eigen::VectorXd upper() const;
    // Natural point: (t_switch [s]) or (t_switch [s], remanent flux [pu], angle [rad]).
    [[nodiscard]] emt::StochasticInputs to_inputs(std::span<const double> x) const;
    // simulate + max_overvoltage, in kV.
    [[nodiscard]] double operator()(std::span<const double> x) const;
};

}  // namespace emtbo
