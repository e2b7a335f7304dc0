#include "emtbo/emt.hpp"

#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

namespace emtbo::emt {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Trapezoidal companion coefficients of the node equation
//   i_RL = i_C + v / R_core + i_m(flux)
// solved for the node voltage at t_{n+1}.
struct Companion {
    double rl_gain = 0.0;     // i_RL,n+1 = rl_gain * (vs_n+1 - v_n+1) + rl_history
    double rl_decay = 0.0;
    double cap_conductance = 0.0;
    double core_conductance = 0.0;
    double half_dt = 0.0;

    Companion(const CircuitParams& p, double dt) {
        const double k = dt / (2.0 * p.inductance);
        const double denom = 1.0 + p.resistance * k;
        rl_gain = k / denom;
        rl_decay = (1.0 - p.resistance * k) / denom;
        cap_conductance = 2.0 * p.capacitance / dt;
        core_conductance = p.core_loss_resistance > 0.0 ? 1.0 / p.core_loss_resistance : 0.0;
        half_dt = 0.5 * dt;
    }

    [[nodiscard]] double rl_history(double i_n, double vs_n, double v_n) const {
        return rl_decay * i_n + rl_gain * (vs_n - v_n);
    }
};

}  // namespace

MagnetizingCurve::MagnetizingCurve(std::vector<double> flux, std::vector<double> current)
    : flux_(std::move(flux)), current_(std::move(current)) {
    if (flux_.size() != current_.size() || flux_.size() < 2) {
        throw Error(Errc::invalid_argument, "magnetizing curve needs at least two (flux, current) points");
    }
    if (flux_.front() != 0.0 || current_.front() != 0.0) {
        throw Error(Errc::invalid_argument, "magnetizing curve must pass through the origin");
    }
    for (std::size_t i = 1; i < flux_.size(); ++i) {
        if (!(flux_[i] > flux_[i - 1]) || !(current_[i] > current_[i - 1])) {
            throw Error(Errc::invalid_argument, "magnetizing curve must be strictly increasing");
        }
    }
}

MagnetizingCurve MagnetizingCurve::two_slope(double unsaturated_inductance, double knee_flux,
                                             double saturated_inductance) {
    const double knee_current = knee_flux / unsaturated_inductance;
    return MagnetizingCurve({0.0, knee_flux, 2.0 * knee_flux},
                            {0.0, knee_current, knee_current + knee_flux / saturated_inductance});
}

double MagnetizingCurve::current(double flux) const noexcept {
    const double a = std::abs(flux);
    const auto it = std::upper_bound(flux_.begin(), flux_.end(), a);
    std::size_t seg = static_cast<std::size_t>(std::distance(flux_.begin(), it));
    seg = std::clamp<std::size_t>(seg, 1, flux_.size() - 1);
    const double s = (current_[seg] - current_[seg - 1]) / (flux_[seg] - flux_[seg - 1]);
    const double i = current_[seg - 1] + s * (a - flux_[seg - 1]);
    return flux < 0.0 ? -i : i;
}

double MagnetizingCurve::slope(double flux) const noexcept {
    const double a = std::abs(flux);
    const auto it = std::upper_bound(flux_.begin(), flux_.end(), a);
    std::size_t seg = static_cast<std::size_t>(std::distance(flux_.begin(), it));
    seg = std::clamp<std::size_t>(seg, 1, flux_.size() - 1);
    return (current_[seg] - current_[seg - 1]) / (flux_[seg] - flux_[seg - 1]);
}

double MagnetizingCurve::energy(double flux) const noexcept {
    const double a = std::abs(flux);
    double w = 0.0;
    for (std::size_t seg = 1; seg < flux_.size(); ++seg) {
        const double f0 = flux_[seg - 1];
        if (a <= f0) {
            break;
        }
        const double f1 = seg + 1 == flux_.size() ? a : flux_[seg];
        const double top = std::min(a, f1);
        w += 0.5 * (current(f0) + current(top)) * (top - f0);
    }
    return w;
}

CircuitParams CircuitParams::defaults() {
    CircuitParams p;
    const double v_ll_rms = 400e3;
    const double s_rated = 300e6;
    p.rated_voltage_peak = v_ll_rms * std::numbers::sqrt2 / std::sqrt(3.0);
    p.source_amplitude = p.rated_voltage_peak;
    const double omega = two_pi * p.frequency;
    const double z_base = v_ll_rms * v_ll_rms / s_rated;
    const double i_base_peak = s_rated / (std::sqrt(3.0) * v_ll_rms) * std::numbers::sqrt2;
    const double rated_flux = p.rated_voltage_peak / omega;
    // 0.3 % magnetizing current at rated flux, knee at 1.15 pu, 0.15 pu air-core slope.
    const double l_unsat = rated_flux / (0.003 * i_base_peak);
    const double l_sat = 0.15 * z_base / omega;
    p.magnetizing = MagnetizingCurve::two_slope(l_unsat, 1.15 * rated_flux, l_sat);
    p.core_loss_resistance = 5000.0 * z_base;
    return p;
}

double CircuitParams::rated_flux() const noexcept {
    return rated_voltage_peak / (two_pi * frequency);
}

void CircuitParams::validate() const {
    if (!(resistance > 0.0) || !(inductance > 0.0) || !(capacitance > 0.0)) {
        throw Error(Errc::invalid_argument, "R, L and C must be positive");
    }
    if (!(frequency > 0.0) || !(source_amplitude >= 0.0) || !(rated_voltage_peak > 0.0)) {
        throw Error(Errc::invalid_argument, "source frequency and rated voltage must be positive");
    }
    if (!(core_loss_resistance > 0.0)) {
        throw Error(Errc::invalid_argument, "core-loss resistance must be positive");
    }
}

void StochasticInputs::validate() const {
    if (!(t_switch >= 0.0 && t_switch <= 0.010 + 1e-12)) {
        throw Error(Errc::invalid_argument, "switching time must lie in [0, 10 ms]");
    }
    if (!(remanent_flux >= 0.0 && remanent_flux <= 0.8 + 1e-12)) {
        throw Error(Errc::invalid_argument, "remanent flux must lie in [0, 0.8] pu");
    }
    if (!(remanence_angle >= 0.0 && remanence_angle <= two_pi + 1e-12)) {
        throw Error(Errc::invalid_argument, "remanence angle must lie in [0, 2 pi]");
    }
}

double input_impedance(const CircuitParams& params, double frequency) {
    if (!(frequency > 0.0)) {
        throw Error(Errc::invalid_argument, "frequency must be positive");
    }
    const double omega = two_pi * frequency;
    const std::complex<double> z_series(params.resistance, omega * params.inductance);
    const std::complex<double> y_shunt(0.0, omega * params.capacitance);
    return std::abs(z_series / (1.0 + z_series * y_shunt));
}

Waveform simulate(const CircuitParams& params, const StochasticInputs& inputs, const SimulationOptions& options) {
    params.validate();
    inputs.validate();
    const double dt = options.timestep;
    if (!(dt > 0.0) || dt > 50e-6 + 1e-15) {
        throw Error(Errc::invalid_argument, "timestep must lie in (0, 50 us]");
    }
    if (!(options.duration >= 0.5)) {
        throw Error(Errc::invalid_argument, "duration must be at least 0.5 s");
    }

    const auto steps = static_cast<std::size_t>(std::floor(options.duration / dt + 1e-9));
    const auto switch_step = static_cast<std::size_t>(std::llround(inputs.t_switch / dt));
    const double omega = two_pi * params.frequency;
    const double amplitude = options.zero_source ? 0.0 : params.source_amplitude;
    const Companion cm(params, dt);
    const MagnetizingCurve& curve = params.magnetizing;
    const double fixed_conductance = cm.rl_gain + cm.cap_conductance + cm.core_conductance;

    Waveform w;
    w.timestep = dt;
    w.duration = options.duration;
    w.switch_step = switch_step;
    w.samples.assign(steps + 1, 0.0);
    if (options.record_states) {
        w.inductor_current.assign(steps + 1, 0.0);
        w.flux.assign(steps + 1, 0.0);
    }

    double flux = inputs.remanent_flux * params.rated_flux() * std::cos(inputs.remanence_angle);
    double v = 0.0;
    double i_rl = 0.0;
    // Capacitor supplies the magnetizing current at the instant of closing.
    double i_cap = -curve.current(flux);
    if (options.record_states) {
        for (std::size_t k = 0; k <= std::min(switch_step, steps); ++k) {
            w.flux[k] = flux;
        }
    }

    double vs_next = amplitude * std::sin(omega * static_cast<double>(switch_step) * dt);
    for (std::size_t k = switch_step; k < steps; ++k) {
        const double vs_n = vs_next;
        vs_next = amplitude * std::sin(omega * static_cast<double>(k + 1) * dt);
        const double rl_hist = cm.rl_history(i_rl, vs_n, v);
        // Residual of the node equation; strictly decreasing in the unknown.
        const double base = cm.rl_gain * vs_next + rl_hist + cm.cap_conductance * v + i_cap;
        const double flux_hist = flux + cm.half_dt * v;
        auto residual = [&](double x) { return base - fixed_conductance * x - curve.current(flux_hist + cm.half_dt * x); };

        double x = v;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        int iter = 0;
        bool converged = false;
        while (iter < options.max_newton_iterations) {
            ++iter;
            const double f = residual(x);
            if (f > 0.0) {
                lo = x;
            } else if (f < 0.0) {
                hi = x;
            } else {
                converged = true;
                break;
            }
            const double df = -fixed_conductance - curve.slope(flux_hist + cm.half_dt * x) * cm.half_dt;
            const double step = f / df;
            if (std::abs(step) <= 1e-10 * (1.0 + std::abs(x))) {
                x -= step;
                converged = true;
                break;
            }
            double next = x - step;
            // Piecewise-linear characteristics can make Newton cycle across a
            // knee; fall back to bisection once the root is bracketed.
            if (!(next > lo && next < hi) && std::isfinite(lo) && std::isfinite(hi)) {
                next = 0.5 * (lo + hi);
            }
            x = next;
        }
        if (!converged) {
            throw Error(Errc::nonconvergence, "node-voltage Newton iteration did not converge at step " +
                                                  std::to_string(k + 1) + " after " + std::to_string(iter) +
                                                  " iterations");
        }
        w.max_newton_iterations = std::max(w.max_newton_iterations, iter);

        const double v_next = x;
        i_rl = cm.rl_gain * (vs_next - v_next) + rl_hist;
        i_cap = cm.cap_conductance * (v_next - v) - i_cap;
        flux = flux_hist + cm.half_dt * v_next;
        v = v_next;
        w.samples[k + 1] = v;
        if (options.record_states) {
            w.inductor_current[k + 1] = i_rl;
            w.flux[k + 1] = flux;
        }
        if (!std::isfinite(v)) {
            throw Error(Errc::nonconvergence, "non-finite node voltage at step " + std::to_string(k + 1));
        }
    }
    return w;
}

double max_overvoltage(const Waveform& waveform) {
    if (waveform.samples.empty()) {
        throw Error(Errc::invalid_argument, "cannot take the maximum of an empty waveform");
    }
    double peak = 0.0;
    for (double s : waveform.samples) {
        peak = std::max(peak, std::abs(s));
    }
    return peak / 1e3;
}

double stored_energy(const CircuitParams& params, double inductor_current, double voltage, double flux) {
    return 0.5 * params.inductance * inductor_current * inductor_current +
           0.5 * params.capacitance * voltage * voltage + params.magnetizing.energy(flux);
}

double simulated_impedance(const CircuitParams& params, double frequency, double timestep, double settle_time) {
    params.validate();
    if (!(frequency > 0.0) || !(timestep > 0.0)) {
        throw Error(Errc::invalid_argument, "frequency and timestep must be positive");
    }
    const Companion cm(params, timestep);
    const double omega = two_pi * frequency;
    const double g = cm.rl_gain + cm.cap_conductance;
    const double period = 1.0 / frequency;
    const double cycles = std::max(2.0, std::ceil(0.2 * frequency));
    const auto settle_steps = static_cast<std::size_t>(std::ceil(settle_time / timestep));
    const auto window_steps = static_cast<std::size_t>(std::llround(cycles * period / timestep));

    double v = 0.0;
    double i_rl = 0.0;
    double i_cap = 0.0;
    double sum_sin = 0.0;
    double sum_cos = 0.0;
    double sum_ss = 0.0;
    double sum_cc = 0.0;
    double sum_sc = 0.0;
    const std::size_t total = settle_steps + window_steps;
    for (std::size_t k = 0; k < total; ++k) {
        const double t_next = static_cast<double>(k + 1) * timestep;
        const double injected = std::sin(omega * t_next);
        const double rl_hist = cm.rl_history(i_rl, 0.0, v);
        const double v_next = (rl_hist + cm.cap_conductance * v + i_cap + injected) / g;
        i_rl = -cm.rl_gain * v_next + rl_hist;
        i_cap = cm.cap_conductance * (v_next - v) - i_cap;
        v = v_next;
        if (k + 1 > settle_steps) {
            const double s = std::sin(omega * t_next);
            const double c = std::cos(omega * t_next);
            sum_sin += v * s;
            sum_cos += v * c;
            sum_ss += s * s;
            sum_cc += c * c;
            sum_sc += s * c;
        }
    }
    // Least-squares fit v = a sin + b cos over the window.
    const double det = sum_ss * sum_cc - sum_sc * sum_sc;
    const double a = (sum_sin * sum_cc - sum_cos * sum_sc) / det;
    const double b = (sum_cos * sum_ss - sum_sin * sum_sc) / det;
    return std::hypot(a, b);
}

void write_waveform_csv(std::ostream& out, const Waveform& waveform) {
    out << "time_s,voltage_V\n";
    char buf[64];
    for (std::size_t k = 0; k < waveform.samples.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.9g,%.17g\n", static_cast<double>(k) * waveform.timestep,
                      waveform.samples[k]);
        out << buf;
    }
}

}  // namespace emtbo::emt
