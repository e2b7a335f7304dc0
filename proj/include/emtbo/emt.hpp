#pragma once

#include <iosfwd>
#include <vector>

namespace emtbo::emt {

// Single-valued flux-current characteristic, given on the positive side and
// mirrored through the origin. Beyond the last point the last slope is
// extended.
class MagnetizingCurve {
public:
    MagnetizingCurve() = default;
    // Points (flux [Wb-turns], current [A]) with flux strictly increasing,
    // starting at the origin.
    MagnetizingCurve(std::vector<double> flux, std::vector<double> current);

    // Two-segment curve: linear up to the knee, then the saturated slope.
    static MagnetizingCurve two_slope(double unsaturated_inductance, double knee_flux, double saturated_inductance);

    [[nodiscard]] double current(double flux) const noexcept;
    // dI/dflux (inverse incremental inductance).
    [[nodiscard]] double slope(double flux) const noexcept;
    // Co-energy-free stored energy: integral of i dflux from 0.
    [[nodiscard]] double energy(double flux) const noexcept;

    [[nodiscard]] const std::vector<double>& flux_points() const noexcept { return flux_; }
    [[nodiscard]] const std::vector<double>& current_points() const noexcept { return current_; }

private:
    std::vector<double> flux_{0.0, 1.0};
    std::vector<double> current_{0.0, 1.0};
};

// Energization circuit: ideal source -> breaker -> series R, L -> node with
// shunt C and the transformer (saturable magnetizing branch in parallel with
// the core-loss resistance) to ground.
struct CircuitParams {
    double resistance = 1.32;        // ohm
    double inductance = 50e-3;       // H
    double capacitance = 50.6e-6;    // F
    double source_amplitude = 0.0;   // V peak
    double frequency = 50.0;         // Hz
    double rated_voltage_peak = 0.0; // V peak, defines rated flux
    MagnetizingCurve magnetizing;
    double core_loss_resistance = 0.0;  // ohm

    // Default 400 kV system energizing a 300 MVA single-phase-equivalent transformer.
    static CircuitParams defaults();

    [[nodiscard]] double rated_flux() const noexcept;
    void validate() const;
};

struct StochasticInputs {
    double t_switch = 0.0;        // s, in [0, 0.010]
    double remanent_flux = 0.0;   // per unit of rated flux, in [0, 0.8]
    double remanence_angle = 0.0; // rad, in [0, 2 pi]

    void validate() const;
};

struct SimulationOptions {
    double timestep = 10e-6;
    double duration = 1.0;
    int max_newton_iterations = 50;
    bool record_states = false;
    // Zero the source after the breaker closes (energy-decay checks).
    bool zero_source = false;
};

struct Waveform {
    double timestep = 0.0;
    double duration = 0.0;
    std::vector<double> samples;  // transformer terminal voltage [V]
    int max_newton_iterations = 0;
    std::size_t switch_step = 0;

    // Filled when SimulationOptions::record_states is set.
    std::vector<double> inductor_current;
    std::vector<double> flux;
};

/// |Z| seen from the capacitor node with the source shorted and the
/// transformer open: (R + jwL) in parallel with 1/(jwC).
double input_impedance(const CircuitParams& params, double frequency);

/// Fixed-step trapezoidal integration. The breaker closes at the step nearest
/// to inputs.t_switch; throws Error(nonconvergence) naming the step if the
/// per-step nonlinear solve does not converge.
Waveform simulate(const CircuitParams& params, const StochasticInputs& inputs, const SimulationOptions& options = {});

/// Maximum |v| over the samples, in kV.
double max_overvoltage(const Waveform& waveform);

/// Stored energy 1/2 L i^2 + 1/2 C v^2 + core energy, in J.
double stored_energy(const CircuitParams& params, double inductor_current, double voltage, double flux);

/// Driving-point impedance magnitude measured in the time domain: a unit
/// sinusoidal current is injected at the capacitor node with the source
/// shorted and the transformer open, and the steady-state voltage amplitude
/// is extracted by Fourier projection.
double simulated_impedance(const CircuitParams& params, double frequency, double timestep = 10e-6,
                           double settle_time = 1.2);

void write_waveform_csv(std::ostream& out, const Waveform& waveform);

}  // namespace emtbo::emt
