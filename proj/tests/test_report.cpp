#include "emtbo/csv.hpp"
#include "emtbo/error.hpp"
#include "emtbo/report.hpp"
#include "emtbo/study.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace emtbo;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::invalid_argument;
}

nlohmann::json minimal_grid_study() {
    return nlohmann::json::parse(R"({
        "id": "t", "study": "bo-grid", "seed": 3,
        "objective": {"kind": "synthetic-risk"},
        "domain": {"type": "grid"},
        "init_count": 3, "max_iterations": 4
    })");
}

std::string config_message(const nlohmann::json& doc) {
    try {
        static_cast<void>(parse_study(doc));
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_error);
        return e.what();
    }
    FAIL("expected a config error");
    return {};
}

}  // namespace

TEST_CASE("numbers parse strictly and print round-trippably") {
    CHECK(parse_number(" 1.5 ", "x") == 1.5);
    CHECK(parse_number("+2e-3", "x") == 2e-3);
    CHECK(parse_number("-0.25", "x") == -0.25);
    for (const char* bad : {"", " ", "1,5", "abc", "1.5x", "--1", "0x10"}) {
        CAPTURE(bad);
        CHECK(code_of([&] { static_cast<void>(parse_number(bad, "x")); }) == Errc::parse_error);
    }
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(uniform01(rng) - 0.5, static_cast<int>(uniform01(rng) * 80) - 40);
        CHECK(parse_number(format_number(v), "x") == v);
    }
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(750.0) == "750");
}

TEST_CASE("csv tables keep line numbers and reject ragged rows") {
    std::istringstream in("a,b\n1,2\n\n3,4\n");
    const CsvTable t = read_csv(in, "s");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.line_numbers == std::vector<std::size_t>{2, 4});
    std::istringstream ragged("a,b\n1,2,3\n");
    CHECK(code_of([&] { static_cast<void>(read_csv(ragged, "s")); }) == Errc::parse_error);
    std::istringstream empty("");
    CHECK(code_of([&] { static_cast<void>(read_csv(empty, "s")); }) == Errc::parse_error);
}

TEST_CASE("trace csv round trip") {
    std::vector<TraceRow> rows;
    rows.push_back({0, Eigen::Vector2d(0.25, 1.1574), 0.07, 0.07});
    rows.push_back({1, Eigen::Vector2d(1.75, 0.1), 0.06488, 0.06488});
    rows.push_back({2, Eigen::Vector2d(2.0, 3.14159), 0.09, 0.06488});
    std::stringstream buf;
    write_trace_csv(buf, rows);
    std::string header;
    std::getline(std::istringstream(buf.str()), header);
    CHECK(header == "iter,x1,x2,y,incumbent");
    CHECK(parse_trace_csv(buf) == rows);

    std::istringstream wrong("iter,x1,value,incumbent\n0,1,2,3\n");
    CHECK(code_of([&] { static_cast<void>(parse_trace_csv(wrong)); }) == Errc::parse_error);
    std::istringstream frac("iter,x1,y,incumbent\n0.5,1,2,3\n");
    CHECK(code_of([&] { static_cast<void>(parse_trace_csv(frac)); }) == Errc::parse_error);
}

TEST_CASE("trace rows from a baseline map back to natural units") {
    ScaledObjective obj([](std::span<const double> x) { return 800.0 + x[0]; }, Eigen::VectorXd::Zero(1),
                        Eigen::VectorXd::Constant(1, 0.01), 800.0, Sense::Maximize);
    BaselineResult r;
    r.xs = {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 1.0)};
    r.ys = {obj.scale_output(810.0), obj.scale_output(805.0)};
    r.incumbent_trace = {r.ys[0], r.ys[0]};
    r.evaluations = 2;
    const auto rows = trace_rows(r, obj);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].iter == 1);
    CHECK(rows[1].iter == 2);
    CHECK(rows[0].x[0] == doctest::Approx(0.005));
    CHECK(rows[1].y == doctest::Approx(805.0));
    CHECK(rows[1].incumbent == doctest::Approx(810.0));
}

TEST_CASE("comparison csv round trip and optimality gap") {
    const std::vector<ComparisonRow> rows{{"bo", 25, 0.0, true}, {"nelder-mead@0.005", 19, 7.66, true},
                                          {"dual-annealing", 25, 0.3125, false}};
    std::stringstream buf;
    write_comparison_csv(buf, rows);
    CHECK(buf.str().rfind("method,evaluations,gap_percent,converged\n", 0) == 0);
    CHECK(parse_comparison_csv(buf) == rows);
    std::istringstream bad("method,evaluations,gap_percent,converged\nbo,3,0,yes\n");
    CHECK(code_of([&] { static_cast<void>(parse_comparison_csv(bad)); }) == Errc::parse_error);

    CHECK(optimality_gap_percent(840.0, 840.0) == 0.0);
    CHECK(optimality_gap_percent(800.0, 840.0) == doctest::Approx(4.7619047619));
    CHECK(optimality_gap_percent(0.07, 0.06488) == doctest::Approx(7.8914919852));
    CHECK(code_of([] { static_cast<void>(optimality_gap_percent(1.0, 0.0)); }) == Errc::invalid_argument);
}

TEST_CASE("histogram bins cover the range and count every value") {
    const std::vector<double> v{1.0, 2.0, 2.5, 3.0, 4.0, 5.0};
    const auto bins = histogram(v, 4);
    REQUIRE(bins.size() == 4);
    CHECK(bins.front().lower == 1.0);
    CHECK(bins.back().upper == 5.0);
    long total = 0;
    for (const auto& b : bins) {
        total += b.count;
    }
    CHECK(total == 6);
    CHECK(bins[0].count == 1);
    CHECK(bins[1].count == 2);
    CHECK(bins[3].count == 2);

    std::stringstream buf;
    write_histogram_csv(buf, bins);
    CHECK(buf.str().rfind("bin_lower,bin_upper,count\n", 0) == 0);
    CHECK(parse_histogram_csv(buf) == bins);

    const auto flat = histogram({7.0, 7.0}, 3);
    long flat_total = 0;
    for (const auto& b : flat) {
        flat_total += b.count;
    }
    CHECK(flat_total == 2);
    CHECK(histogram({}, 3).empty());
    CHECK(code_of([] { static_cast<void>(histogram({1.0}, 0)); }) == Errc::invalid_argument);
}

TEST_CASE("impedance csv round trip with and without the simulated column") {
    const std::vector<ImpedanceRow> analytic{{20.0, 6.5, std::nullopt}, {100.06, 748.6, std::nullopt}};
    std::stringstream a;
    write_impedance_csv(a, analytic);
    CHECK(a.str().rfind("frequency_hz,impedance_ohm\n", 0) == 0);
    CHECK(parse_impedance_csv(a) == analytic);

    const std::vector<ImpedanceRow> both{{50.0, 20.5, 20.4}, {100.06, 748.6, 747.9}};
    std::stringstream b;
    write_impedance_csv(b, both);
    CHECK(b.str().rfind("frequency_hz,impedance_ohm,simulated_ohm\n", 0) == 0);
    CHECK(parse_impedance_csv(b) == both);
}

TEST_CASE("study documents parse with defaults and strict field checks") {
    const StudySpec s = parse_study(minimal_grid_study());
    CHECK(s.kind == StudyKind::BoGrid);
    CHECK(s.seed == 3);
    CHECK(s.bo.init_count == 3);
    CHECK(s.bo.max_iterations == 4);
    CHECK(s.bo.domain.is_grid());
    CHECK(s.bo.domain.grid_size() == 180);

    auto doc = minimal_grid_study();
    doc["init_count"] = 0;
    CHECK(config_message(doc).find("init_count") != std::string::npos);

    doc = minimal_grid_study();
    doc["surprise"] = 1;
    CHECK(config_message(doc).find("surprise") != std::string::npos);

    doc = minimal_grid_study();
    doc["surrogate"] = {{"kernel", "cubic"}};
    CHECK(config_message(doc).find("surrogate.kernel") != std::string::npos);

    doc = minimal_grid_study();
    doc.erase("domain");
    CHECK(config_message(doc).find("domain") != std::string::npos);

    doc = minimal_grid_study();
    doc["study"] = "baseline-suite";
    CHECK_FALSE(config_message(doc).empty());

    doc = minimal_grid_study();
    doc["seed"] = "abc";
    CHECK(config_message(doc).find("seed") != std::string::npos);
}

TEST_CASE("seed override reaches every copy") {
    StudySpec s = parse_study(minimal_grid_study());
    override_seed(s, 77);
    CHECK(s.seed == 77);
    CHECK(s.bo.seed == 77);
    CHECK(s.exceedance.study.seed == 77);
}

TEST_CASE("study kinds round trip through their names") {
    for (auto k : {StudyKind::BoGrid, StudyKind::BoContinuous, StudyKind::BaselineSuite, StudyKind::Exceedance,
                   StudyKind::MonteCarlo, StudyKind::ImpedanceScan}) {
        CHECK(study_kind_from_string(to_string(k)) == k);
    }
    CHECK(code_of([] { static_cast<void>(study_kind_from_string("nope")); }) == Errc::config_error);
}

TEST_CASE("in-memory grid study reports its convergence") {
    auto doc = minimal_grid_study();
    doc["max_iterations"] = 20;
    doc["oracle"] = {{"kind", "grid-optimum"}};
    const StudyReport r = run_study(parse_study(doc));
    REQUIRE(r.summary["runs"].size() == 1);
    const auto& run = r.summary["runs"][0];
    CHECK(run["evaluations"] == 23);
    CHECK(run["best_y"].get<double>() >= 0.06488);
    CHECK(run["converged"].get<bool>() == (run["best_y"].get<double>() == 0.06488));
    CHECK(r.summary["restarts_converged"] == (run["converged"].get<bool>() ? 1 : 0));
    CHECK(r.manifest.empty());
    CHECK(resolve_oracle(parse_study(doc)) == 0.06488);
}
