#include "emtbo/objectives.hpp"

#include "emtbo/csv.hpp"
#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <string>

namespace emtbo {

namespace {

std::size_t find_node(const std::vector<double>& axis, double value) {
    const double span = axis.size() > 1 ? axis.back() - axis.front() : 1.0;
    const double tol = 1e-9 * std::max(std::abs(span), 1e-300);
    const auto it = std::lower_bound(axis.begin(), axis.end(), value - tol);
    if (it == axis.end() || std::abs(*it - value) > tol) {
        return axis.size();
    }
    return static_cast<std::size_t>(std::distance(axis.begin(), it));
}

void check_axis(const std::vector<double>& axis, const char* name) {
    if (axis.empty()) {
        throw Error(Errc::invalid_argument, std::string(name) + " axis is empty");
    }
    for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i] > axis[i - 1])) {
            throw Error(Errc::invalid_argument, std::string(name) + " axis must be strictly increasing");
        }
    }
}

}  // namespace

GridObjective::GridObjective(std::vector<double> k_axis, std::vector<double> phi_axis, Eigen::MatrixXd risk)
    : k_axis_(std::move(k_axis)), phi_axis_(std::move(phi_axis)), risk_(std::move(risk)) {
    check_axis(k_axis_, "k");
    check_axis(phi_axis_, "phi");
    if (risk_.rows() != static_cast<Eigen::Index>(k_axis_.size()) ||
        risk_.cols() != static_cast<Eigen::Index>(phi_axis_.size())) {
        throw Error(Errc::dimension_mismatch, "risk table shape does not match the axes");
    }
    if (!risk_.allFinite() || risk_.minCoeff() < 0.0 || risk_.maxCoeff() > 1.0) {
        throw Error(Errc::invalid_argument, "risk values must be finite and lie in [0, 1]");
    }
}

double GridObjective::lookup(double k, double phi) const {
    const std::size_t i = find_node(k_axis_, k);
    const std::size_t j = find_node(phi_axis_, phi);
    if (i == k_axis_.size() || j == phi_axis_.size()) {
        throw Error(Errc::lookup_miss, "(k=" + format_number(k) + ", phi=" + format_number(phi) +
                                           ") is not a grid node");
    }
    return risk_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

double GridObjective::operator()(std::span<const double> x) const {
    if (x.size() != 2) {
        throw Error(Errc::dimension_mismatch, "grid objective takes (k, phi)");
    }
    return lookup(x[0], x[1]);
}

GridObjective::Node GridObjective::minimum() const {
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    const double v = risk_.minCoeff(&i, &j);
    return Node{static_cast<std::size_t>(i), static_cast<std::size_t>(j), v};
}

void GridObjective::write_csv(std::ostream& out) const {
    out << "k,phi,risk\n";
    for (std::size_t i = 0; i < k_axis_.size(); ++i) {
        for (std::size_t j = 0; j < phi_axis_.size(); ++j) {
            out << format_number(k_axis_[i]) << ',' << format_number(phi_axis_[j]) << ','
                << format_number(risk_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << '\n';
        }
    }
}

GridObjective parse_grid_objective(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(Errc::parse_error, source + ": empty grid file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "k,phi,risk") {
        throw Error(Errc::parse_error, source + ": header must be 'k,phi,risk', got '" + line + "'");
    }
    std::map<std::pair<double, double>, double> rows;
    std::set<double> ks;
    std::set<double> phis;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
            throw Error(Errc::parse_error, where + ": expected three comma-separated fields");
        }
        const std::string_view view(line);
        const double k = parse_number(view.substr(0, c1), where);
        const double phi = parse_number(view.substr(c1 + 1, c2 - c1 - 1), where);
        const double risk = parse_number(view.substr(c2 + 1), where);
        if (!std::isfinite(k) || !std::isfinite(phi) || !std::isfinite(risk)) {
            throw Error(Errc::parse_error, where + ": non-finite value");
        }
        if (risk < 0.0 || risk > 1.0) {
            throw Error(Errc::parse_error, where + ": risk " + format_number(risk) + " outside [0, 1]");
        }
        if (!rows.emplace(std::make_pair(k, phi), risk).second) {
            throw Error(Errc::parse_error, where + ": duplicate row for (k=" + format_number(k) +
                                               ", phi=" + format_number(phi) + ")");
        }
        ks.insert(k);
        phis.insert(phi);
    }
    if (rows.empty()) {
        throw Error(Errc::parse_error, source + ": no data rows");
    }
    std::vector<double> k_axis(ks.begin(), ks.end());
    std::vector<double> phi_axis(phis.begin(), phis.end());
    Eigen::MatrixXd risk(static_cast<Eigen::Index>(k_axis.size()), static_cast<Eigen::Index>(phi_axis.size()));
    for (std::size_t i = 0; i < k_axis.size(); ++i) {
        for (std::size_t j = 0; j < phi_axis.size(); ++j) {
            const auto it = rows.find({k_axis[i], phi_axis[j]});
            if (it == rows.end()) {
                throw Error(Errc::parse_error, source + ": missing grid point (k=" + format_number(k_axis[i]) +
                                                   ", phi=" + format_number(phi_axis[j]) + ")");
            }
            risk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second;
        }
    }
    return GridObjective(std::move(k_axis), std::move(phi_axis), std::move(risk));
}

GridObjective load_grid_objective(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw Error(Errc::parse_error, "cannot open grid file " + file.string());
    }
    return parse_grid_objective(in, file.string());
}

GridObjective make_synthetic_risk_grid(const SyntheticRiskSpec& spec) {
    if (spec.k_count < 2 || spec.phi_count < 2 || !(spec.minimum < spec.maximum)) {
        throw Error(Errc::invalid_argument, "synthetic grid needs >= 2 nodes per axis and minimum < maximum");
    }
    std::vector<double> k_axis(spec.k_count);
    std::vector<double> phi_axis(spec.phi_count);
    for (std::size_t i = 0; i < spec.k_count; ++i) {
        k_axis[i] = spec.k_max * static_cast<double>(i) / static_cast<double>(spec.k_count - 1);
    }
    for (std::size_t j = 0; j < spec.phi_count; ++j) {
        phi_axis[j] = spec.phi_max * static_cast<double>(j) / static_cast<double>(spec.phi_count - 1);
    }
    auto nearest = [](const std::vector<double>& axis, double v) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < axis.size(); ++i) {
            if (std::abs(axis[i] - v) < std::abs(axis[best] - v)) {
                best = i;
            }
        }
        return best;
    };
    const std::size_t ki = nearest(k_axis, spec.k_min_at);
    const std::size_t pj = nearest(phi_axis, spec.phi_min_at);
    // Bowl centres in unit coordinates; the secondary bowl sits in the
    // opposite corner region.
    const double u0 = k_axis[ki] / spec.k_max;
    const double w0 = phi_axis[pj] / spec.phi_max;
    const double u1 = 0.25;
    const double w1 = 0.8;

    Eigen::MatrixXd raw(static_cast<Eigen::Index>(spec.k_count), static_cast<Eigen::Index>(spec.phi_count));
    for (std::size_t i = 0; i < spec.k_count; ++i) {
        for (std::size_t j = 0; j < spec.phi_count; ++j) {
            const double u = k_axis[i] / spec.k_max;
            const double w = phi_axis[j] / spec.phi_max;
            const double d0 = (u - u0) * (u - u0) / (2.0 * 0.35 * 0.35) + (w - w0) * (w - w0) / (2.0 * 0.25 * 0.25);
            const double d1 = (u - u1) * (u - u1) / (2.0 * 0.2 * 0.2) + (w - w1) * (w - w1) / (2.0 * 0.15 * 0.15);
            raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                1.0 - std::exp(-d0) - 0.6 * std::exp(-d1) + 0.1 * std::sin(3.0 * w) * u;
        }
    }
    const double raw_min = raw(static_cast<Eigen::Index>(ki), static_cast<Eigen::Index>(pj));
    if (raw.minCoeff() < raw_min) {
        throw Error(Errc::invalid_argument, "synthetic surface minimum is not at the designated node");
    }
    const double raw_max = raw.maxCoeff();
    Eigen::MatrixXd risk = spec.minimum + (raw.array() - raw_min) / (raw_max - raw_min) * (spec.maximum - spec.minimum);
    risk(static_cast<Eigen::Index>(ki), static_cast<Eigen::Index>(pj)) = spec.minimum;
    return GridObjective(std::move(k_axis), std::move(phi_axis), std::move(risk));
}

ScaledObjective::ScaledObjective(ObjectiveFn fn, Eigen::VectorXd lower, Eigen::VectorXd upper, double divisor,
                                 Sense sense)
    : fn_(std::move(fn)), lower_(std::move(lower)), upper_(std::move(upper)), divisor_(divisor), sense_(sense) {
    if (lower_.size() != upper_.size() || lower_.size() == 0) {
        throw Error(Errc::dimension_mismatch, "objective bounds must be non-empty and of equal length");
    }
    if (!((upper_ - lower_).array() > 0.0).all()) {
        throw Error(Errc::invalid_argument, "objective bounds must satisfy lower < upper");
    }
    if (!(divisor_ > 0.0) || !std::isfinite(divisor_)) {
        throw Error(Errc::invalid_argument, "output divisor must be positive");
    }
}

Eigen::VectorXd ScaledObjective::to_unit(const Eigen::Ref<const Eigen::VectorXd>& natural) const {
    return ((natural - lower_).array() / (upper_ - lower_).array()).matrix();
}

Eigen::VectorXd ScaledObjective::from_unit(const Eigen::Ref<const Eigen::VectorXd>& unit) const {
    return (lower_.array() + unit.array() * (upper_ - lower_).array()).matrix();
}

double ScaledObjective::scale_output(double natural) const noexcept {
    const double y = natural / divisor_;
    return sense_ == Sense::Maximize ? -y : y;
}

double ScaledObjective::unscale_output(double scaled) const noexcept {
    return (sense_ == Sense::Maximize ? -scaled : scaled) * divisor_;
}

double ScaledObjective::evaluate(const Eigen::Ref<const Eigen::VectorXd>& unit_x) {
    if (unit_x.size() != dimension()) {
        throw Error(Errc::dimension_mismatch, "objective expects a " + std::to_string(dimension()) + "-d point");
    }
    for (Eigen::Index i = 0; i < unit_x.size(); ++i) {
        if (!(unit_x[i] >= -1e-12 && unit_x[i] <= 1.0 + 1e-12)) {
            throw Error(Errc::invalid_argument, "point lies outside the unit box");
        }
    }
    return evaluate_natural(from_unit(unit_x.cwiseMax(0.0).cwiseMin(1.0)));
}

double ScaledObjective::evaluate_natural(const Eigen::Ref<const Eigen::VectorXd>& natural_x) {
    if (budget_ && counter_.load() >= *budget_) {
        throw Error(Errc::objective_failure, "evaluation budget of " + std::to_string(*budget_) + " exhausted");
    }
    ++counter_;
    const Eigen::VectorXd x = natural_x;
    const double value = fn_(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    if (!std::isfinite(value)) {
        throw Error(Errc::objective_failure, "objective returned a non-finite value");
    }
    return scale_output(value);
}

Eigen::VectorXd EnergizationProblem::lower() const {
    return Eigen::VectorXd::Zero(dimension());
}

Eigen::VectorXd EnergizationProblem::upper() const {
    Eigen::VectorXd u(dimension());
    u[0] = 0.010;
    if (inputs == EnergizationInputs::Full) {
        u[1] = 0.8;
        u[2] = 2.0 * std::numbers::pi;
    }
    return u;
}

emt::StochasticInputs EnergizationProblem::to_inputs(std::span<const double> x) const {
    if (static_cast<Eigen::Index>(x.size()) != dimension()) {
        throw Error(Errc::dimension_mismatch, "energization objective expects " + std::to_string(dimension()) +
                                                  " inputs");
    }
    emt::StochasticInputs in;
    in.t_switch = std::clamp(x[0], 0.0, 0.010);
    if (inputs == EnergizationInputs::Full) {
        in.remanent_flux = std::clamp(x[1], 0.0, 0.8);
        in.remanence_angle = std::clamp(x[2], 0.0, 2.0 * std::numbers::pi);
    }
    return in;
}

double EnergizationProblem::operator()(std::span<const double> x) const {
    return emt::max_overvoltage(emt::simulate(circuit, to_inputs(x), simulation));
}

}  // namespace emtbo
