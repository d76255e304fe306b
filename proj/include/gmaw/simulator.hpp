#pragma once

// Fixed-step simulation of the switched plant. Each phase system is
// discretized exactly (zero-order hold via the matrix exponential) once per
// step size; the metal-transfer schedule alternates the two systems.

#include "gmaw/model.hpp"
#include "gmaw/waveform.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace gmaw {

struct PlantState {
    double i_L = 0.0;          ///< inductor current [A]
    double v_C = 0.0;          ///< short-circuit capacitor voltage [V]; zero in the arc phase
    Phase phase = Phase::ElectricArc;
    double phase_clock = 0.0;  ///< time since the last switch [s]

    /// State vector of the active subsystem (2 states in SC, 1 in EA).
    [[nodiscard]] Eigen::VectorXd x() const;
};

struct StepResult {
    PlantState state;  ///< state after the step
    double I_W = 0.0;  ///< current at the start of the step [A]
    double U_arc = 0.0;  ///< reconstructed arc voltage at the start of the step [V]
};

/// Both phase systems discretized at one step size.
class SwitchedPlant {
public:
    SwitchedPlant(const CircuitParams& params, double dt);

    [[nodiscard]] StepResult step(const PlantState& state, double E_W) const;
    /// U_arc = E_W - R_L*i - L*di/dt, with di/dt from the active phase dynamics.
    [[nodiscard]] double arc_voltage(const PlantState& state, double E_W) const;
    /// Equilibrium current of the arc phase under a constant E_W (diode-clamped).
    [[nodiscard]] double arc_equilibrium(double E_W) const;

    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] const CircuitParams& params() const { return params_; }

private:
    CircuitParams params_;
    double dt_;
    Eigen::Matrix2d sc_Ad_;
    Eigen::Vector2d sc_Bd_;
    double ea_ad_ = 0.0;
    double ea_bd_ = 0.0;
};

/// One step with a one-off discretization at `dt`.
StepResult step(const PlantState& state, const CircuitParams& params, double E_W, double dt);

/// Carries i_L across the switch; v_C restarts at zero; clock resets.
PlantState switch_phase(const PlantState& state, Phase new_phase);

struct SimConfig {
    double dt_sim = 1e-6;
    double duration = 0.1;
    double noise_std_I = 0.0;
    double noise_std_V = 0.0;
    double jitter = 0.0;  ///< relative std of phase durations
    std::uint64_t seed = 0;
    std::size_t record_stride = 1;  ///< record every n-th simulation step
    std::optional<double> initial_current;  ///< default: arc equilibrium of the initial E_W

    void validate() const;
};

struct SwitchEvent {
    std::size_t step = 0;  ///< simulation step index at which the new phase starts
    double time = 0.0;
    Phase to = Phase::ElectricArc;
    double i_L_before = 0.0;
    double i_L_after = 0.0;
};

struct SimulationTrace {
    std::vector<SwitchEvent> switches;
};

using VoltageProfile = std::function<double(double t)>;

Waveform run_open_loop(const CircuitParams& params, const SimConfig& config, const VoltageProfile& E_W,
                       SimulationTrace* trace = nullptr);
Waveform run_open_loop(const CircuitParams& params, const SimConfig& config, double E_W,
                       SimulationTrace* trace = nullptr);

/// What the controller sees at each controller period.
struct Measurement {
    double t = 0.0;
    double I_W = 0.0;
    double U_arc = 0.0;
};

/// Returns a duty command; it is clamped by the actuator map.
using ControllerCallback = std::function<double(const Measurement&)>;

struct ClosedLoopConfig {
    ActuatorMap actuator;
    double controller_period = 10e-6;  ///< integer multiple of dt_sim
    double initial_duty = 0.0;
};

Waveform run_closed_loop(const CircuitParams& params, const SimConfig& config, const ClosedLoopConfig& loop,
                         const ControllerCallback& controller, SimulationTrace* trace = nullptr);

}  // namespace gmaw
