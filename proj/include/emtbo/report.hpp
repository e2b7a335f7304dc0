#pragma once

#include "emtbo/baselines.hpp"
#include "emtbo/bo_loop.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace emtbo {

// One line of `iter,x1..xd,y,incumbent`. Values are natural objective units.
struct TraceRow {
    int iter = 0;
    Eigen::VectorXd x;
    double y = 0.0;
    double incumbent = 0.0;

    bool operator==(const TraceRow&) const = default;
};

std::vector<TraceRow> trace_rows(const BoTrace& trace);
// Baseline points are unit-box coordinates; they are mapped back through the
// objective. Rows are numbered from 1 by evaluation.
std::vector<TraceRow> trace_rows(const BaselineResult& result, const ScaledObjective& objective);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);
std::vector<TraceRow> parse_trace_csv(std::istream& in, const std::string& source = "<trace>");

struct ComparisonRow {
    std::string method;
    long evaluations = 0;
    double gap_percent = 0.0;
    bool converged = false;

    bool operator==(const ComparisonRow&) const = default;
};

/// |best - oracle| / |oracle| * 100; the oracle must be nonzero.
double optimality_gap_percent(double best, double oracle);

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
std::vector<ComparisonRow> parse_comparison_csv(std::istream& in, const std::string& source = "<comparison>");

struct HistogramBin {
    double lower = 0.0;
    double upper = 0.0;
    long count = 0;

    bool operator==(const HistogramBin&) const = default;
};

/// Equal-width bins spanning [min, max]; the maximum lands in the last bin.
std::vector<HistogramBin> histogram(const std::vector<double>& values, int bins);
void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins);
std::vector<HistogramBin> parse_histogram_csv(std::istream& in, const std::string& source = "<histogram>");

struct ImpedanceRow {
    double frequency_hz = 0.0;
    double analytic_ohm = 0.0;
    std::optional<double> simulated_ohm;

    bool operator==(const ImpedanceRow&) const = default;
};

void write_impedance_csv(std::ostream& out, const std::vector<ImpedanceRow>& rows);
std::vector<ImpedanceRow> parse_impedance_csv(std::istream& in, const std::string& source = "<impedance>");

}  // namespace emtbo
