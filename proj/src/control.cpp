#include "gmaw/control.hpp"

#include "gmaw/error.hpp"
#include "gmaw/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gmaw {

void PidGains::validate() const {
    if (!(K_p > 0.0) || !std::isfinite(K_p)) throw ValidationError("PID gain K_p must be positive");
    if (!(T_i > 0.0)) throw ValidationError("PID integral time T_i must be positive");
    if (!(T_d >= 0.0) || !std::isfinite(T_d)) throw ValidationError("PID derivative time T_d must be >= 0");
    if (!(T_f > 0.0) || !std::isfinite(T_f)) throw ValidationError("PID filter time T_f must be positive");
}

PidGains PidGains::standard(double K_p, double T_i, double T_d, double filter_ratio) {
    if (!(filter_ratio > 0.0)) throw ValidationError("derivative filter ratio must be positive");
    PidGains g{K_p, T_i, T_d, T_d > 0.0 ? T_d / filter_ratio : 1e-6};
    g.validate();
    return g;
}

SwitchedGains SwitchedGains::table2() {
    return {PidGains::standard(4.25, 6.296e-3, 1.176e-3), PidGains::standard(1.55, 1.107e-3, 1.613e-3)};
}

SwitchedGains SwitchedGains::table3() {
    return {PidGains::standard(2.75, 39.286e-3, 454.55e-6), PidGains::standard(3.25, 13e-3, 769.23e-6)};
}

void ReferenceSpec::validate() const {
    if (!(alpha_sc > 0.0 && alpha_ea < 0.0)) throw ValidationError("reference slopes need alpha_sc > 0 > alpha_ea");
    if (!(base_current >= 0.0)) throw ValidationError("base current must be >= 0");
}

void DetectorConfig::validate(double controller_period) const {
    if (!(v_threshold > 0.0)) throw ValidationError("detector voltage threshold must be positive");
    if (!(slope_threshold >= 0.0)) throw ValidationError("detector slope threshold must be >= 0");
    if (!(gradient_window >= 2.0 * controller_period * (1.0 - 1e-9))) {
        throw ValidationError("detector gradient window must span at least two controller periods");
    }
    if (debounce_periods < 3) throw ValidationError("detector debounce must be at least 3 periods");
}

double reference(const ControllerState& state, const ReferenceSpec& spec, double t_in_phase) {
    const double ramp = state.I_o + spec.alpha(state.detected_phase) * t_in_phase;
    if (state.detected_phase == Phase::ElectricArc) return std::max(ramp, spec.base_current);
    return ramp;
}

PidOutput pid_step(ControllerState& s, const PidGains& g, double error, double dt, const ActuatorMap& map) {
    const double kp = g.k_p();
    const double ki = g.k_i();
    const double kd = g.k_d();
    if (s.reset_pending) {
        s.integrator = s.last_output - kp * error;
        s.derivative = 0.0;
        s.previous_error = error;
        s.has_previous_error = true;
        s.reset_pending = false;
    }
    if (!s.has_previous_error) {
        s.previous_error = error;
        s.has_previous_error = true;
    }

    const double de = error - s.previous_error;
    const double a = (2.0 * g.T_f - dt) / (2.0 * g.T_f + dt);
    const double b = 2.0 * kd / (2.0 * g.T_f + dt);
    s.derivative = a * s.derivative + b * de;
    const double integrator_candidate = s.integrator + ki * dt * 0.5 * (error + s.previous_error);

    const double unsaturated = kp * error + integrator_candidate + s.derivative;
    const double v_max = map.volts_max();
    const double v_min = map.volts_min();
    PidOutput out;
    if (unsaturated > v_max) {
        out.volts = v_max;
        out.saturated = true;
        if (error < 0.0) s.integrator = integrator_candidate;
    } else if (unsaturated < v_min) {
        out.volts = v_min;
        out.saturated = true;
        if (error > 0.0) s.integrator = integrator_candidate;
    } else {
        out.volts = unsaturated;
        s.integrator = integrator_candidate;
    }
    out.duty = volts_to_duty(map, out.volts).duty;
    s.previous_error = error;
    s.last_output = out.volts;
    return out;
}

double window_slope(const std::vector<double>& samples, double dt) {
    const auto n = samples.size();
    if (n < 2) return 0.0;
    const double mid = 0.5 * static_cast<double>(n - 1);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k) - mid;
        num += x * samples[k];
        den += x * x;
    }
    return num / (den * dt);
}

Detection detect_phase(ControllerState& s, double I_W, double U_arc, const DetectorConfig& config, double dt) {
    const auto window = static_cast<std::size_t>(std::llround(config.gradient_window / dt)) + 1;
    s.current_window.push_back(I_W);
    if (s.current_window.size() > window) {
        s.current_window.erase(s.current_window.begin(),
                               s.current_window.begin() + static_cast<std::ptrdiff_t>(s.current_window.size() - window));
    }
    Detection d;
    d.gradient = s.current_window.size() >= 3 ? window_slope(s.current_window, dt) : 0.0;
    ++s.periods_since_switch;

    bool switch_now = false;
    if (s.periods_since_switch >= config.debounce_periods) {
        if (s.detected_phase == Phase::ElectricArc) {
            switch_now = d.gradient > config.slope_threshold && U_arc < config.v_threshold;
        } else {
            switch_now = d.gradient < 0.0;
        }
    }
    if (switch_now) {
        s.detected_phase = other_phase(s.detected_phase);
        s.I_o = I_W;
        s.time_in_phase = 0.0;
        s.reset_pending = true;
        s.periods_since_switch = 0;
    }
    d.phase = s.detected_phase;
    d.switched = switch_now;
    return d;
}

SwitchedPidController::SwitchedPidController(const CircuitParams& params, const ActuatorMap& actuator,
                                             ControllerSettings settings)
    : params_(params), actuator_(actuator), settings_(std::move(settings)) {
    params_.validate();
    actuator_.validate();
    settings_.gains.sc.validate();
    settings_.gains.ea.validate();
    settings_.reference.validate();
    if (!(settings_.controller_period > 0.0)) throw ValidationError("controller period must be positive");
    settings_.detector.validate(settings_.controller_period);

    state_.detected_phase = Phase::ElectricArc;
    state_.I_o = settings_.reference.base_current;
    state_.last_output = duty_to_volts(actuator_, initial_duty());
    state_.reset_pending = true;
}

double SwitchedPidController::initial_duty() const {
    const double volts = params_.E_ac + params_.arc_loop_resistance() * settings_.reference.base_current;
    return volts_to_duty(actuator_, volts).duty;
}

ClosedLoopConfig SwitchedPidController::loop_config() const {
    return {actuator_, settings_.controller_period, initial_duty()};
}

double SwitchedPidController::operator()(const Measurement& m) {
    const double h = settings_.controller_period;
    const Detection d = detect_phase(state_, m.I_W, m.U_arc, settings_.detector, h);
    if (d.switched) events_.push_back({m.t, d.phase});
    const double error = reference(state_, settings_.reference, state_.time_in_phase) - m.I_W;
    const PidOutput out = pid_step(state_, settings_.gains.for_phase(state_.detected_phase), error, h, actuator_);
    state_.time_in_phase += h;
    return out.duty;
}

SwitchedPidController controller_callback(const CircuitParams& params, const ActuatorMap& actuator,
                                          const PidGains& gains_sc, const PidGains& gains_ea,
                                          const ReferenceSpec& spec, const DetectorConfig& config,
                                          double controller_period) {
    return SwitchedPidController(params, actuator, ControllerSettings{{gains_sc, gains_ea}, spec, config, controller_period});
}

Waveform simulate_switched_pid(const CircuitParams& params, const ActuatorMap& actuator, const SimConfig& config,
                               const ControllerSettings& settings, std::vector<DetectionEvent>* events,
                               SimulationTrace* trace) {
    SwitchedPidController controller(params, actuator, settings);
    SimConfig cfg = config;
    Waveform w = run_closed_loop(params, cfg, controller.loop_config(), std::ref(controller), trace);
    if (events) *events = controller.events();
    return w;
}

namespace {

PidGains gains_from(const KeyValueConfig& cfg, const std::string& prefix, double filter_ratio) {
    const double K_p = cfg.number(prefix + "K_p");
    const double T_i = cfg.number_or(prefix + "T_i", std::numeric_limits<double>::infinity());
    const double T_d = cfg.number_or(prefix + "T_d", 0.0);
    PidGains g = PidGains::standard(K_p, T_i, T_d, filter_ratio);
    if (auto T_f = cfg.maybe_number(prefix + "T_f")) g.T_f = *T_f;
    g.validate();
    return g;
}

}  // namespace

ControllerSettings controller_settings_from(const KeyValueConfig& cfg) {
    ControllerSettings s;
    const double ratio = cfg.number_or("filter_ratio", 1.0);
    s.gains.sc = gains_from(cfg, "sc.", ratio);
    s.gains.ea = gains_from(cfg, "ea.", ratio);
    s.reference.alpha_sc = cfg.number_or("alpha_sc", s.reference.alpha_sc);
    s.reference.alpha_ea = cfg.number_or("alpha_ea", s.reference.alpha_ea);
    s.reference.base_current = cfg.number_or("base_current", s.reference.base_current);
    s.detector.v_threshold = cfg.number_or("v_threshold", s.detector.v_threshold);
    s.detector.slope_threshold = cfg.number_or("slope_threshold", s.detector.slope_threshold);
    s.detector.gradient_window = cfg.number_or("gradient_window", s.detector.gradient_window);
    s.detector.debounce_periods =
        static_cast<int>(std::lround(cfg.number_or("debounce_periods", s.detector.debounce_periods)));
    s.controller_period = cfg.number_or("controller_period", s.controller_period);
    s.reference.validate();
    s.detector.validate(s.controller_period);
    return s;
}

ControllerSettings load_controller_settings(const std::filesystem::path& path) {
    return controller_settings_from(KeyValueConfig::load(path));
}

KeyValueConfig to_config(const ControllerSettings& s) {
    KeyValueConfig cfg;
    for (const auto& [prefix, g] : {std::pair<std::string, PidGains>{"sc.", s.gains.sc}, {"ea.", s.gains.ea}}) {
        cfg.set(prefix + "K_p", g.K_p);
        cfg.set(prefix + "T_i", g.T_i);
        cfg.set(prefix + "T_d", g.T_d);
        cfg.set(prefix + "T_f", g.T_f);
    }
    cfg.set("alpha_sc", s.reference.alpha_sc);
    cfg.set("alpha_ea", s.reference.alpha_ea);
    cfg.set("base_current", s.reference.base_current);
    cfg.set("v_threshold", s.detector.v_threshold);
    cfg.set("slope_threshold", s.detector.slope_threshold);
    cfg.set("gradient_window", s.detector.gradient_window);
    cfg.set("debounce_periods", static_cast<double>(s.detector.debounce_periods));
    cfg.set("controller_period", s.controller_period);
    return cfg;
}

}  // namespace gmaw
