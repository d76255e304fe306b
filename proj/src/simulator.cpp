#include "gmaw/simulator.hpp"

#include "gmaw/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <random>

namespace gmaw {

Eigen::VectorXd PlantState::x() const {
    if (phase == Phase::ShortCircuit) return Eigen::Vector2d(i_L, v_C);
    return Eigen::VectorXd::Constant(1, i_L);
}

SwitchedPlant::SwitchedPlant(const CircuitParams& params, double dt) : params_(params), dt_(dt) {
    params_.validate();
    if (!(dt > 0.0)) throw ValidationError("simulation step must be positive");

    const LinearSystem sc = sc_transfer(params_);
    Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
    aug.topLeftCorner<2, 2>() = sc.A * dt;
    aug.topRightCorner<2, 1>() = sc.B * dt;
    const Eigen::Matrix3d sc_exp = aug.exp();
    sc_Ad_ = sc_exp.topLeftCorner<2, 2>();
    sc_Bd_ = sc_exp.topRightCorner<2, 1>();

    // First-order arc system: closed form of the same ZOH discretization.
    const double pole = -params_.arc_loop_resistance() / params_.L;
    ea_ad_ = std::exp(pole * dt);
    ea_bd_ = -std::expm1(pole * dt) / params_.arc_loop_resistance();
}

double SwitchedPlant::arc_voltage(const PlantState& s, double E_W) const {
    const auto& p = params_;
    double didt = 0.0;
    if (s.phase == Phase::ShortCircuit) {
        didt = (E_W - (p.R_L + p.R_1) * s.i_L - s.v_C) / p.L;
    } else {
        didt = (E_W - p.E_ac - p.arc_loop_resistance() * s.i_L) / p.L;
    }
    // The output rectifier holds the current at zero instead of reversing it.
    if (s.i_L <= 0.0 && didt < 0.0) didt = 0.0;
    return E_W - p.R_L * s.i_L - p.L * didt;
}

double SwitchedPlant::arc_equilibrium(double E_W) const {
    return std::max(0.0, (E_W - params_.E_ac) / params_.arc_loop_resistance());
}

StepResult SwitchedPlant::step(const PlantState& s, double E_W) const {
    StepResult r;
    r.I_W = s.i_L;
    r.U_arc = arc_voltage(s, E_W);
    r.state = s;
    if (s.phase == Phase::ShortCircuit) {
        const Eigen::Vector2d next = sc_Ad_ * Eigen::Vector2d(s.i_L, s.v_C) + sc_Bd_ * E_W;
        r.state.i_L = next(0);
        r.state.v_C = next(1);
    } else {
        r.state.i_L = ea_ad_ * s.i_L + ea_bd_ * (E_W - params_.E_ac);
        r.state.v_C = 0.0;
    }
    r.state.i_L = std::max(r.state.i_L, 0.0);
    r.state.phase_clock = s.phase_clock + dt_;
    if (!std::isfinite(r.state.i_L) || !std::isfinite(r.state.v_C)) {
        throw SimulationDiverged("simulation diverged: non-finite plant state");
    }
    return r;
}

StepResult step(const PlantState& state, const CircuitParams& params, double E_W, double dt) {
    return SwitchedPlant(params, dt).step(state, E_W);
}

PlantState switch_phase(const PlantState& state, Phase new_phase) {
    PlantState next = state;
    next.phase = new_phase;
    next.v_C = 0.0;
    next.phase_clock = 0.0;
    return next;
}

void SimConfig::validate() const {
    if (!(dt_sim > 0.0) || !std::isfinite(dt_sim)) throw ValidationError("dt_sim must be positive");
    if (!(duration >= dt_sim) || !std::isfinite(duration)) throw ValidationError("duration must be >= dt_sim");
    if (!(noise_std_I >= 0.0) || !(noise_std_V >= 0.0)) throw ValidationError("noise std must be >= 0");
    if (!(jitter >= 0.0)) throw ValidationError("jitter must be >= 0");
    if (record_stride == 0) throw ValidationError("record_stride must be >= 1");
    if (initial_current && !(*initial_current >= 0.0)) throw ValidationError("initial current must be >= 0");
}

namespace {

/// Draws phase durations: truncated Gaussian at +-3 sigma, floored at 10% of nominal.
class PhaseSchedule {
public:
    PhaseSchedule(const CircuitParams& p, double jitter, double dt, std::uint64_t seed)
        : t_cc_(p.t_cc), t_ae_(p.t_ae), jitter_(jitter), dt_(dt), rng_(seed) {}

    std::size_t draw_steps(Phase phase) {
        const double nominal = phase == Phase::ShortCircuit ? t_cc_ : t_ae_;
        double duration = nominal;
        if (jitter_ > 0.0) {
            double z = 0.0;
            do {
                z = normal_(rng_);
            } while (std::abs(z) > 3.0);
            duration = std::max(nominal * (1.0 + jitter_ * z), 0.1 * nominal);
        }
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration / dt_)));
    }

private:
    double t_cc_;
    double t_ae_;
    double jitter_;
    double dt_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

class MeasurementNoise {
public:
    MeasurementNoise(double std_I, double std_V, std::uint64_t seed)
        : std_I_(std_I), std_V_(std_V), rng_(seed ^ 0x9E3779B97F4A7C15ULL) {}

    std::pair<double, double> draw() {
        const double nI = std_I_ > 0.0 ? std_I_ * normal_(rng_) : 0.0;
        const double nV = std_V_ > 0.0 ? std_V_ * normal_(rng_) : 0.0;
        return {nI, nV};
    }

private:
    double std_I_;
    double std_V_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Shared driver: `command(k, measured)` returns the E_W applied over step k.
template <typename CommandFn>
Waveform simulate(const CircuitParams& params, const SimConfig& config, double initial_E_W, CommandFn&& command,
                  SimulationTrace* trace) {
    config.validate();
    const SwitchedPlant plant(params, config.dt_sim);
    PhaseSchedule schedule(params, config.jitter, config.dt_sim, config.seed);
    MeasurementNoise noise(config.noise_std_I, config.noise_std_V, config.seed);

    const auto n_steps = static_cast<std::size_t>(std::llround(config.duration / config.dt_sim));
    Waveform w;
    w.reserve(n_steps / config.record_stride + 1);

    PlantState state;
    state.phase = Phase::ElectricArc;
    state.i_L = config.initial_current.value_or(plant.arc_equilibrium(initial_E_W));
    std::size_t steps_left = schedule.draw_steps(state.phase);
    double E_W = initial_E_W;

    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * config.dt_sim;
        if (steps_left == 0) {
            const Phase to = other_phase(state.phase);
            const double before = state.i_L;
            state = switch_phase(state, to);
            if (state.i_L != before) throw SimulationDiverged("inductor current discontinuous at switch");
            if (trace) trace->switches.push_back({k, t, to, before, state.i_L});
            steps_left = schedule.draw_steps(to);
        }
        const auto [nI, nV] = noise.draw();
        const Measurement measured{t, state.i_L + nI, plant.arc_voltage(state, E_W) + nV};
        E_W = command(k, t, measured);

        const StepResult r = plant.step(state, E_W);
        if (k % config.record_stride == 0) w.push_back(t, r.I_W + nI, r.U_arc + nV, E_W, state.phase);
        state = r.state;
        --steps_left;
    }
    return w;
}

}  // namespace

Waveform run_open_loop(const CircuitParams& params, const SimConfig& config, const VoltageProfile& E_W,
                       SimulationTrace* trace) {
    return simulate(
        params, config, E_W(0.0), [&](std::size_t, double t, const Measurement&) { return E_W(t); }, trace);
}

Waveform run_open_loop(const CircuitParams& params, const SimConfig& config, double E_W, SimulationTrace* trace) {
    return run_open_loop(params, config, VoltageProfile([E_W](double) { return E_W; }), trace);
}

Waveform run_closed_loop(const CircuitParams& params, const SimConfig& config, const ClosedLoopConfig& loop,
                         const ControllerCallback& controller, SimulationTrace* trace) {
    loop.actuator.validate();
    config.validate();
    const double ratio = loop.controller_period / config.dt_sim;
    const auto period_steps = static_cast<std::size_t>(std::llround(ratio));
    if (period_steps == 0 || std::abs(ratio - static_cast<double>(period_steps)) > 1e-9 * ratio) {
        throw ValidationError("controller period must be an integer multiple of dt_sim");
    }
    const auto& act = loop.actuator;
    double E_W = duty_to_volts(act, std::clamp(loop.initial_duty, act.duty_min, act.duty_max));
    return simulate(
        params, config, E_W,
        [&](std::size_t k, double, const Measurement& m) {
            if (k % period_steps == 0) {
                const double duty = controller(m);
                if (!std::isfinite(duty)) throw SimulationDiverged("controller produced a non-finite command");
                E_W = duty_to_volts(act, std::clamp(duty, act.duty_min, act.duty_max));
            }
            return E_W;
        },
        trace);
}

}  // namespace gmaw
