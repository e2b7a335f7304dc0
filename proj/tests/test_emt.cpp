#include "emtbo/emt.hpp"
#include "emtbo/error.hpp"
#include "emtbo/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

using namespace emtbo;
using namespace emtbo::emt;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Same circuit with the knee pushed far beyond any reachable flux.
CircuitParams linear_circuit() {
    CircuitParams p = CircuitParams::defaults();
    const double l_unsat = p.magnetizing.flux_points()[1] / p.magnetizing.current_points()[1];
    p.magnetizing = MagnetizingCurve::two_slope(l_unsat, 1e3 * p.rated_flux(), l_unsat);
    return p;
}

// Steady-state node-voltage amplitude from phasor analysis.
double phasor_amplitude(const CircuitParams& p, double l_m) {
    const double w = two_pi * p.frequency;
    const std::complex<double> z_s(p.resistance, w * p.inductance);
    const std::complex<double> y(1.0 / p.core_loss_resistance, w * p.capacitance - 1.0 / (w * l_m));
    return p.source_amplitude / std::abs(1.0 + z_s * y);
}

}  // namespace

TEST_CASE("magnetizing curve is odd, monotone and integrates to its energy") {
    const MagnetizingCurve c = MagnetizingCurve::two_slope(2.0, 1.0, 0.5);
    CHECK(c.current(0.0) == 0.0);
    CHECK(c.current(0.5) == doctest::Approx(0.25));
    CHECK(c.current(1.0) == doctest::Approx(0.5));
    CHECK(c.current(2.0) == doctest::Approx(2.5));
    CHECK(c.current(-2.0) == doctest::Approx(-2.5));
    CHECK(c.slope(0.5) == doctest::Approx(0.5));
    CHECK(c.slope(-3.0) == doctest::Approx(2.0));
    // Energy: 0.5 * 1 * 0.5 + (0.5 * 1 + 0.5 * 2 * 1) = 1.75 at flux 2.
    CHECK(c.energy(2.0) == doctest::Approx(1.75));
    CHECK(c.energy(-2.0) == doctest::Approx(1.75));
    CHECK_THROWS_AS(MagnetizingCurve({0.0, 1.0, 0.5}, {0.0, 1.0, 2.0}), Error);
    CHECK_THROWS_AS(MagnetizingCurve({0.0, 1.0}, {0.0, -1.0}), Error);
    CHECK_THROWS_AS(MagnetizingCurve({0.1, 1.0}, {0.0, 1.0}), Error);
}

TEST_CASE("input impedance resonates near 100 Hz at about 750 ohm") {
    const CircuitParams p = CircuitParams::defaults();
    const double f0 = 1.0 / (two_pi * std::sqrt(p.inductance * p.capacitance));
    CHECK(f0 == doctest::Approx(100.06).epsilon(1e-4));
    const double peak = input_impedance(p, f0);
    CHECK(peak == doctest::Approx(p.inductance / (p.resistance * p.capacitance)).epsilon(2e-3));
    CHECK(peak == doctest::Approx(748.6).epsilon(2e-3));
    CHECK(input_impedance(p, 200.0) < peak);
    CHECK(input_impedance(p, 50.0) < peak);
    double best = 0.0;
    double best_f = 0.0;
    for (double f = 20.0; f <= 300.0; f += 0.01) {
        const double z = input_impedance(p, f);
        if (z > best) {
            best = z;
            best_f = f;
        }
    }
    CHECK(best_f == doctest::Approx(f0).epsilon(1e-3));
    CHECK_THROWS_AS(static_cast<void>(input_impedance(p, 0.0)), Error);
}

TEST_CASE("time-domain impedance agrees with the analytic curve") {
    const CircuitParams p = CircuitParams::defaults();
    for (double f : {50.0, 100.06, 150.0}) {
        CHECK(simulated_impedance(p, f) == doctest::Approx(input_impedance(p, f)).epsilon(0.01));
    }
}

TEST_CASE("linear circuit settles to the phasor solution") {
    const CircuitParams p = linear_circuit();
    const double l_m = p.magnetizing.flux_points()[1] / p.magnetizing.current_points()[1];
    StochasticInputs in;
    in.t_switch = 0.0;
    const Waveform w = simulate(p, in);
    REQUIRE(w.samples.size() == 100001);
    // Last five cycles.
    double amp = 0.0;
    for (std::size_t k = w.samples.size() - 10000; k < w.samples.size(); ++k) {
        amp = std::max(amp, std::abs(w.samples[k]));
    }
    CHECK(amp == doctest::Approx(phasor_amplitude(p, l_m)).epsilon(0.01));
}

TEST_CASE("dead circuit stays at zero") {
    CircuitParams p = CircuitParams::defaults();
    p.source_amplitude = 0.0;
    StochasticInputs in;
    in.t_switch = 0.003;
    const Waveform w = simulate(p, in);
    CHECK(std::all_of(w.samples.begin(), w.samples.end(), [](double s) { return s == 0.0; }));
    CHECK(max_overvoltage(w) == 0.0);
}

TEST_CASE("stored energy never grows once the source is removed") {
    const CircuitParams p = CircuitParams::defaults();
    SimulationOptions opt;
    opt.zero_source = true;
    opt.record_states = true;
    opt.duration = 0.5;
    for (double angle : {0.0, 2.0, std::numbers::pi}) {
        StochasticInputs in;
        in.t_switch = 0.004;
        in.remanent_flux = 0.8;
        in.remanence_angle = angle;
        const Waveform w = simulate(p, in, opt);
        REQUIRE(w.flux.size() == w.samples.size());
        double prev = stored_energy(p, w.inductor_current[w.switch_step], w.samples[w.switch_step], w.flux[w.switch_step]);
        CHECK(prev > 0.0);
        const double e0 = prev;
        int violations = 0;
        for (std::size_t k = w.switch_step + 1; k < w.samples.size(); ++k) {
            const double e = stored_energy(p, w.inductor_current[k], w.samples[k], w.flux[k]);
            if (e > prev * (1.0 + 1e-6) + 1e-12 * e0) {
                ++violations;
            }
            prev = e;
        }
        CHECK(violations == 0);
        CHECK(prev < e0);
    }
}

TEST_CASE("halving the timestep barely moves the overvoltage") {
    const CircuitParams p = CircuitParams::defaults();
    SimulationOptions coarse;
    coarse.timestep = 20e-6;
    SimulationOptions fine;
    fine.timestep = 10e-6;
    for (double t : {0.0, 0.0025, 0.006, 0.008}) {
        StochasticInputs in;
        in.t_switch = t;
        const double a = max_overvoltage(simulate(p, in, coarse));
        const double b = max_overvoltage(simulate(p, in, fine));
        CAPTURE(t);
        CHECK(std::abs(a - b) < 0.005 * b);
    }
}

TEST_CASE("the switching-time landscape wraps at the half period") {
    const CircuitParams p = CircuitParams::defaults();
    StochasticInputs a;
    a.t_switch = 0.0;
    StochasticInputs b;
    b.t_switch = 0.010;
    const double fa = max_overvoltage(simulate(p, a));
    const double fb = max_overvoltage(simulate(p, b));
    CHECK(fa == doctest::Approx(fb).epsilon(1e-3));
}

TEST_CASE("nonlinear solve converges across the stochastic box") {
    const CircuitParams p = CircuitParams::defaults();
    Rng rng(123);
    int worst = 0;
    for (int i = 0; i < 1000; ++i) {
        StochasticInputs in;
        in.t_switch = 0.010 * uniform01(rng);
        in.remanent_flux = 0.8 * uniform01(rng);
        in.remanence_angle = two_pi * uniform01(rng);
        const Waveform w = simulate(p, in);
        worst = std::max(worst, w.max_newton_iterations);
    }
    CHECK(worst <= 50);
    CHECK(worst >= 1);
}

TEST_CASE("too few Newton iterations is reported with the step index") {
    const CircuitParams p = CircuitParams::defaults();
    SimulationOptions opt;
    opt.max_newton_iterations = 1;
    StochasticInputs in;
    in.remanent_flux = 0.8;
    try {
        static_cast<void>(simulate(p, in, opt));
        FAIL("expected nonconvergence");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::nonconvergence);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("simulation is deterministic and honours its preconditions") {
    const CircuitParams p = CircuitParams::defaults();
    StochasticInputs in;
    in.t_switch = 0.00337;
    in.remanent_flux = 0.4;
    in.remanence_angle = 1.2;
    const Waveform a = simulate(p, in);
    const Waveform b = simulate(p, in);
    CHECK(a.samples == b.samples);
    CHECK(a.switch_step == 337);
    CHECK(std::all_of(a.samples.begin(), a.samples.begin() + 338, [](double s) { return s == 0.0; }));

    SimulationOptions opt;
    opt.timestep = 60e-6;
    CHECK_THROWS_AS(static_cast<void>(simulate(p, in, opt)), Error);
    opt.timestep = 10e-6;
    opt.duration = 0.4;
    CHECK_THROWS_AS(static_cast<void>(simulate(p, in, opt)), Error);
    StochasticInputs bad;
    bad.t_switch = 0.02;
    CHECK_THROWS_AS(static_cast<void>(simulate(p, bad)), Error);
    bad.t_switch = 0.0;
    bad.remanent_flux = 0.9;
    CHECK_THROWS_AS(static_cast<void>(simulate(p, bad)), Error);
    CircuitParams broken = p;
    broken.capacitance = 0.0;
    CHECK_THROWS_AS(static_cast<void>(simulate(broken, in)), Error);
}

TEST_CASE("waveform samples stay within the stability bound") {
    const CircuitParams p = CircuitParams::defaults();
    StochasticInputs in;
    in.t_switch = 0.008;
    in.remanent_flux = 0.8;
    in.remanence_angle = std::numbers::pi;
    const Waveform w = simulate(p, in);
    const double bound = 10.0 * p.source_amplitude * input_impedance(p, 100.06) / p.resistance;
    for (double s : w.samples) {
        REQUIRE(std::isfinite(s));
        CHECK(std::abs(s) < bound);
    }
    CHECK(max_overvoltage(w) > p.source_amplitude / 1e3);
}

TEST_CASE("max overvoltage is the sample-wise maximum in kV") {
    Waveform w;
    w.timestep = 1e-5;
    w.samples.assign(100, 400e3);
    CHECK(max_overvoltage(w) == 400.0);

    w.samples.clear();
    const double amp = std::sqrt(2.0) * 460.6e3;
    for (int k = 0; k <= 2000; ++k) {
        w.samples.push_back(amp * std::sin(two_pi * 50.0 * k * 1e-5 + 0.3));
    }
    CHECK(max_overvoltage(w) == doctest::Approx(651.4).epsilon(1e-4));
    CHECK(max_overvoltage(w) <= amp / 1e3);

    w.samples = {1.0, -2500.0, 7.0};
    CHECK(max_overvoltage(w) == 2.5);
    w.samples.clear();
    CHECK_THROWS_AS(static_cast<void>(max_overvoltage(w)), Error);
}

TEST_CASE("waveform csv has a header and one row per sample") {
    Waveform w;
    w.timestep = 1e-5;
    w.samples = {0.0, 1.5, -2.0};
    std::ostringstream out;
    write_waveform_csv(out, w);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "time_s,voltage_V");
    for (std::size_t k = 0; k < w.samples.size(); ++k) {
        REQUIRE(std::getline(in, line));
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        CHECK(std::stod(line.substr(0, comma)) == static_cast<double>(k) * w.timestep);
        CHECK(std::stod(line.substr(comma + 1)) == w.samples[k]);
    }
    CHECK_FALSE(std::getline(in, line));
}
