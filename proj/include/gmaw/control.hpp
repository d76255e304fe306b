#pragma once

// Switched PID current controller: ramp reference per phase, online phase
// detection from current gradient and arc voltage, and per-phase gains.

#include "gmaw/model.hpp"
#include "gmaw/simulator.hpp"
#include "gmaw/waveform.hpp"

#include <filesystem>
#include <limits>
#include <vector>

namespace gmaw {

class KeyValueConfig;

/// Standard-form PID settings. k_p = K_p, k_i = K_p / T_i, k_d = K_p * T_d.
/// The derivative acts through a first-order low-pass with time constant T_f.
struct PidGains {
    double K_p = 0.0;
    double T_i = std::numeric_limits<double>::infinity();
    double T_d = 0.0;
    double T_f = 1e-6;

    [[nodiscard]] double k_p() const { return K_p; }
    [[nodiscard]] double k_i() const { return K_p / T_i; }
    [[nodiscard]] double k_d() const { return K_p * T_d; }

    void validate() const;

    /// T_f = T_d / filter_ratio (T_d = 0 leaves T_f at a nominal positive value).
    static PidGains standard(double K_p, double T_i, double T_d, double filter_ratio = 1.0);
};

struct SwitchedGains {
    PidGains sc;
    PidGains ea;

    [[nodiscard]] const PidGains& for_phase(Phase p) const { return p == Phase::ShortCircuit ? sc : ea; }

    static SwitchedGains table2();
    static SwitchedGains table3();
};

/// Ramp slopes per phase [A/s]. The arc-phase ramp stops at base_current.
struct ReferenceSpec {
    double alpha_sc = 60e3;
    double alpha_ea = -20e3;
    double base_current = 100.0;

    [[nodiscard]] double alpha(Phase p) const { return p == Phase::ShortCircuit ? alpha_sc : alpha_ea; }
    void validate() const;
};

struct DetectorConfig {
    double v_threshold = 14.4;       ///< [V]
    double slope_threshold = 5e3;    ///< [A/s]
    double gradient_window = 30e-6;  ///< least-squares slope span [s]
    int debounce_periods = 3;        ///< minimum controller periods between switch events

    void validate(double controller_period) const;
};

/// Everything the switched controller needs besides the plant.
struct ControllerSettings {
    SwitchedGains gains = SwitchedGains::table2();
    ReferenceSpec reference;
    DetectorConfig detector;
    double controller_period = 10e-6;
};

struct ControllerState {
    double integrator = 0.0;  ///< integral term [V]
    double derivative = 0.0;  ///< filtered derivative term [V]
    double previous_error = 0.0;
    bool has_previous_error = false;
    bool reset_pending = false;  ///< bumpless re-initialization on the next pid_step
    Phase detected_phase = Phase::ElectricArc;
    double I_o = 0.0;            ///< current at the last detected switch [A]
    double time_in_phase = 0.0;  ///< [s]
    double last_output = 0.0;    ///< last voltage command [V]
    int periods_since_switch = std::numeric_limits<int>::max() / 2;
    std::vector<double> current_window;  ///< recent current samples, oldest first
};

/// I_o + alpha * t for the detected phase; arc-phase ramps stop at base_current.
double reference(const ControllerState& state, const ReferenceSpec& spec, double t_in_phase);

struct PidOutput {
    double volts = 0.0;
    double duty = 0.0;
    bool saturated = false;
};

/// One controller period of the filtered PID (trapezoidal integrator and
/// derivative filter). The integrator is frozen while the output is saturated
/// and the error pushes further into saturation.
PidOutput pid_step(ControllerState& state, const PidGains& gains, double error, double dt, const ActuatorMap& map);

/// Least-squares slope of uniformly spaced samples [units per second].
double window_slope(const std::vector<double>& samples, double dt);

struct Detection {
    Phase phase = Phase::ElectricArc;
    bool switched = false;
    double gradient = 0.0;
};

/// Streams one sample into the detector. SC is declared when the smoothed
/// gradient exceeds slope_threshold while U_arc is below v_threshold; EA when
/// the gradient turns negative. A switch re-anchors the reference at the
/// measured current and schedules a bumpless PID reset.
Detection detect_phase(ControllerState& state, double I_W, double U_arc, const DetectorConfig& config, double dt);

struct DetectionEvent {
    double time = 0.0;
    Phase to = Phase::ElectricArc;
};

/// Detector, reference and per-phase PID composed into a closed-loop callback.
class SwitchedPidController {
public:
    SwitchedPidController(const CircuitParams& params, const ActuatorMap& actuator, ControllerSettings settings);

    /// Duty command for one controller period.
    double operator()(const Measurement& m);

    /// Duty that holds the arc phase at the base current.
    [[nodiscard]] double initial_duty() const;
    [[nodiscard]] ClosedLoopConfig loop_config() const;

    [[nodiscard]] const ControllerState& state() const { return state_; }
    [[nodiscard]] const std::vector<DetectionEvent>& events() const { return events_; }
    [[nodiscard]] const ControllerSettings& settings() const { return settings_; }

private:
    CircuitParams params_;
    ActuatorMap actuator_;
    ControllerSettings settings_;
    ControllerState state_;
    std::vector<DetectionEvent> events_;
};

SwitchedPidController controller_callback(const CircuitParams& params, const ActuatorMap& actuator,
                                          const PidGains& gains_sc, const PidGains& gains_ea,
                                          const ReferenceSpec& spec, const DetectorConfig& config,
                                          double controller_period = 10e-6);

/// Closed-loop simulation with the switched controller; detector events are
/// returned through `events` when non-null.
Waveform simulate_switched_pid(const CircuitParams& params, const ActuatorMap& actuator, const SimConfig& config,
                               const ControllerSettings& settings, std::vector<DetectionEvent>* events = nullptr,
                               SimulationTrace* trace = nullptr);

/// Gains file: sc.K_p, sc.T_i, sc.T_d, [sc.T_f], the same for ea., plus
/// optional alpha_sc, alpha_ea, base_current, v_threshold, slope_threshold,
/// gradient_window, debounce_periods, controller_period, filter_ratio.
ControllerSettings controller_settings_from(const KeyValueConfig& cfg);
ControllerSettings load_controller_settings(const std::filesystem::path& path);
KeyValueConfig to_config(const ControllerSettings& settings);

}  // namespace gmaw
