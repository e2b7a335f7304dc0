#include "emtbo/report.hpp"

#include "emtbo/csv.hpp"
#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace emtbo {

namespace {

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const std::string& source) {
    if (t.header != want) {
        std::string joined;
        for (const auto& h : want) {
            joined += (joined.empty() ? "" : ",") + h;
        }
        throw Error(Errc::parse_error, source + ": header must be '" + joined + "'");
    }
}

std::string where(const CsvTable& t, std::size_t row, const std::string& source) {
    return source + ":" + std::to_string(t.line_numbers[row]);
}

long parse_count(const std::string& field, const std::string& at) {
    const double v = parse_number(field, at);
    if (v != std::floor(v) || v < 0.0) {
        throw Error(Errc::parse_error, at + ": expected a non-negative integer, got '" + field + "'");
    }
    return static_cast<long>(v);
}

}  // namespace

std::vector<TraceRow> trace_rows(const BoTrace& trace) {
    std::vector<TraceRow> rows;
    rows.reserve(trace.records.size());
    for (const auto& r : trace.records) {
        rows.push_back(TraceRow{r.iteration, r.x, r.y, r.incumbent});
    }
    return rows;
}

std::vector<TraceRow> trace_rows(const BaselineResult& result, const ScaledObjective& objective) {
    std::vector<TraceRow> rows;
    rows.reserve(result.xs.size());
    for (std::size_t i = 0; i < result.xs.size(); ++i) {
        rows.push_back(TraceRow{static_cast<int>(i + 1), objective.from_unit(result.xs[i]),
                                objective.unscale_output(result.ys[i]),
                                objective.unscale_output(result.incumbent_trace[i])});
    }
    return rows;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
    const Eigen::Index d = rows.empty() ? 1 : rows.front().x.size();
    out << "iter";
    for (Eigen::Index j = 0; j < d; ++j) {
        out << ",x" << (j + 1);
    }
    out << ",y,incumbent\n";
    for (const auto& r : rows) {
        if (r.x.size() != d) {
            throw Error(Errc::dimension_mismatch, "trace rows have differing input dimensions");
        }
        out << r.iter;
        for (Eigen::Index j = 0; j < d; ++j) {
            out << ',' << format_number(r.x[j]);
        }
        out << ',' << format_number(r.y) << ',' << format_number(r.incumbent) << '\n';
    }
}

std::vector<TraceRow> parse_trace_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    const std::size_t n = t.header.size();
    if (n < 4 || t.header.front() != "iter" || t.header[n - 2] != "y" || t.header[n - 1] != "incumbent") {
        throw Error(Errc::parse_error, source + ": header must be 'iter,x1..xd,y,incumbent'");
    }
    for (std::size_t j = 1; j + 2 < n; ++j) {
        if (t.header[j] != "x" + std::to_string(j)) {
            throw Error(Errc::parse_error, source + ": unexpected column '" + t.header[j] + "'");
        }
    }
    std::vector<TraceRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto at = where(t, i, source);
        const auto& f = t.rows[i];
        TraceRow r;
        r.iter = static_cast<int>(parse_count(f[0], at));
        r.x.resize(static_cast<Eigen::Index>(n - 3));
        for (std::size_t j = 1; j + 2 < n; ++j) {
            r.x[static_cast<Eigen::Index>(j - 1)] = parse_number(f[j], at);
        }
        r.y = parse_number(f[n - 2], at);
        r.incumbent = parse_number(f[n - 1], at);
        rows.push_back(std::move(r));
    }
    return rows;
}

double optimality_gap_percent(double best, double oracle) {
    if (oracle == 0.0 || !std::isfinite(oracle)) {
        throw Error(Errc::invalid_argument, "optimality gap needs a finite nonzero oracle");
    }
    return std::abs(best - oracle) / std::abs(oracle) * 100.0;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "method,evaluations,gap_percent,converged\n";
    for (const auto& r : rows) {
        if (r.method.find_first_of(",\n") != std::string::npos) {
            throw Error(Errc::invalid_argument, "method id may not contain commas or newlines");
        }
        out << r.method << ',' << r.evaluations << ',' << format_number(r.gap_percent) << ','
            << (r.converged ? "true" : "false") << '\n';
    }
}

std::vector<ComparisonRow> parse_comparison_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    expect_header(t, {"method", "evaluations", "gap_percent", "converged"}, source);
    std::vector<ComparisonRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto at = where(t, i, source);
        const auto& f = t.rows[i];
        if (f[3] != "true" && f[3] != "false") {
            throw Error(Errc::parse_error, at + ": converged must be true or false");
        }
        rows.push_back(ComparisonRow{f[0], parse_count(f[1], at), parse_number(f[2], at), f[3] == "true"});
    }
    return rows;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) {
        throw Error(Errc::invalid_argument, "histogram needs at least one bin");
    }
    if (values.empty()) {
        return {};
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it > lo ? *hi_it : lo + 1.0;
    const double width = (hi - lo) / bins;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].lower = lo + b * width;
        out[static_cast<std::size_t>(b)].upper = b + 1 == bins ? hi : lo + (b + 1) * width;
    }
    for (double v : values) {
        const auto b = std::clamp<long>(static_cast<long>((v - lo) / width), 0, bins - 1);
        ++out[static_cast<std::size_t>(b)].count;
    }
    return out;
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
    out << "bin_lower,bin_upper,count\n";
    for (const auto& b : bins) {
        out << format_number(b.lower) << ',' << format_number(b.upper) << ',' << b.count << '\n';
    }
}

std::vector<HistogramBin> parse_histogram_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    expect_header(t, {"bin_lower", "bin_upper", "count"}, source);
    std::vector<HistogramBin> bins;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto at = where(t, i, source);
        bins.push_back(HistogramBin{parse_number(t.rows[i][0], at), parse_number(t.rows[i][1], at),
                                    parse_count(t.rows[i][2], at)});
    }
    return bins;
}

void write_impedance_csv(std::ostream& out, const std::vector<ImpedanceRow>& rows) {
    const bool simulated = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.simulated_ohm.has_value(); });
    out << "frequency_hz,impedance_ohm" << (simulated ? ",simulated_ohm" : "") << '\n';
    for (const auto& r : rows) {
        out << format_number(r.frequency_hz) << ',' << format_number(r.analytic_ohm);
        if (simulated) {
            out << ',' << (r.simulated_ohm ? format_number(*r.simulated_ohm) : std::string());
        }
        out << '\n';
    }
}

std::vector<ImpedanceRow> parse_impedance_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    const bool simulated = t.header.size() == 3;
    if (simulated) {
        expect_header(t, {"frequency_hz", "impedance_ohm", "simulated_ohm"}, source);
    } else {
        expect_header(t, {"frequency_hz", "impedance_ohm"}, source);
    }
    std::vector<ImpedanceRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto at = where(t, i, source);
        ImpedanceRow r{parse_number(t.rows[i][0], at), parse_number(t.rows[i][1], at), std::nullopt};
        if (simulated && !t.rows[i][2].empty()) {
            r.simulated_ohm = parse_number(t.rows[i][2], at);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace emtbo
