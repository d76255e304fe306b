#include "gmaw/model.hpp"

#include "gmaw/error.hpp"
#include "gmaw/kv_config.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <string>

namespace gmaw {

namespace {

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ValidationError(std::string("parameter ") + name + " must be positive and finite");
    }
}

}  // namespace

void CircuitParams::validate() const {
    require_positive(L, "L");
    require_positive(R_L, "R_L");
    require_positive(C, "C");
    require_positive(R_c, "R_c");
    require_positive(R_1, "R_1");
    require_positive(R_2, "R_2");
    require_positive(R_rea, "R_rea");
    require_positive(R_reg, "R_reg");
    if (!(E_ac >= 0.0) || !std::isfinite(E_ac)) throw ValidationError("parameter E_ac must be >= 0");
    require_positive(t_cc, "t_cc");
    require_positive(t_ae, "t_ae");
}

CircuitParams CircuitParams::table1() {
    CircuitParams p;
    p.L = 180e-6;
    p.R_L = 0.016;
    p.C = 2000e-3;
    p.R_c = 0.020;
    p.R_1 = 0.010;
    p.R_2 = 0.010;
    p.R_rea = 0.043;
    p.R_reg = 0.045;
    p.E_ac = 11.0;
    p.t_cc = 2.5e-3;
    p.t_ae = 9.5e-3;
    return p;
}

void ActuatorMap::validate() const {
    require_positive(volts_per_unit_duty, "duty_volts_gain");
    if (!(duty_min >= 0.0 && duty_min < duty_max && duty_max <= 0.5)) {
        throw ValidationError("actuator duty range must satisfy 0 <= duty_min < duty_max <= 0.5");
    }
}

double duty_to_volts(const ActuatorMap& map, double duty) { return map.volts_per_unit_duty * duty; }

DutyCommand volts_to_duty(const ActuatorMap& map, double volts) {
    const double raw = volts / map.volts_per_unit_duty;
    const double clamped = std::clamp(raw, map.duty_min, map.duty_max);
    return {clamped, clamped != raw};
}

std::complex<double> polyval(const std::vector<double>& coeffs, std::complex<double> s) {
    std::complex<double> acc{0.0, 0.0};
    for (double c : coeffs) acc = acc * s + c;
    return acc;
}

std::complex<double> TransferFunction::operator()(std::complex<double> s) const {
    return polyval(num, s) / polyval(den, s);
}

std::complex<double> LinearSystem::evaluate(std::complex<double> s) const {
    const auto n = order();
    Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(n, n) - A.cast<std::complex<double>>();
    Eigen::VectorXcd x = M.partialPivLu().solve(B.cast<std::complex<double>>());
    return (c.cast<std::complex<double>>() * x)(0) + d;
}

std::complex<double> LinearSystem::frequency_response(double omega) const {
    return evaluate({0.0, omega});
}

double LinearSystem::dc_gain() const { return evaluate({0.0, 0.0}).real(); }

double LinearSystem::steady_state_output(double u) const { return dc_gain() * (u + u0); }

Eigen::VectorXcd LinearSystem::poles() const {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(A, false);
    return solver.eigenvalues();
}

bool LinearSystem::is_stable() const {
    const auto p = poles();
    return std::all_of(p.data(), p.data() + p.size(), [](const auto& z) { return z.real() < 0.0; });
}

TransferFunction LinearSystem::transfer_function() const {
    const auto n = order();
    // den(s) = s^n + a[1] s^{n-1} + ... + a[n]; adj(sI - A) = sum_k M_k s^{n-k}
    std::vector<double> den(static_cast<std::size_t>(n) + 1, 0.0);
    den[0] = 1.0;
    std::vector<double> num(static_cast<std::size_t>(n) + 1, 0.0);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        M = A * M + den[static_cast<std::size_t>(k - 1)] * I;
        num[static_cast<std::size_t>(k)] = (c * M * B)(0);
        den[static_cast<std::size_t>(k)] = -(A * M).trace() / static_cast<double>(k);
    }
    for (std::size_t k = 0; k < num.size(); ++k) num[k] += d * den[k];
    return {num, den};
}

LinearSystem sc_transfer(const CircuitParams& p) {
    p.validate();
    const double leading = p.C * p.L * p.R_2;
    if (!(leading > 0.0)) throw ValidationError("degenerate short-circuit parameters: C*L*R_2 <= 0");
    LinearSystem sys;
    sys.A.resize(2, 2);
    sys.A << -(p.R_L + p.R_1) / p.L, -1.0 / p.L,
             1.0 / p.C, -1.0 / (p.C * p.R_2);
    sys.B.resize(2);
    sys.B << 1.0 / p.L, 0.0;
    sys.c.resize(2);
    sys.c << 1.0, 0.0;
    return sys;
}

LinearSystem ea_transfer(const CircuitParams& p) {
    if (!(p.L > 0.0)) throw ValidationError("degenerate arc parameters: L <= 0");
    p.validate();
    LinearSystem sys;
    sys.A.resize(1, 1);
    sys.A << -p.arc_loop_resistance() / p.L;
    sys.B.resize(1);
    sys.B << 1.0 / p.L;
    sys.c.resize(1);
    sys.c << 1.0;
    sys.u0 = -p.E_ac;
    return sys;
}

PlantConfig plant_config_from(const KeyValueConfig& cfg) {
    PlantConfig out;
    auto& c = out.circuit;
    c.L = cfg.number("L");
    c.R_L = cfg.number("R_L");
    c.C = cfg.number("C");
    c.R_c = cfg.number("R_c");
    c.R_1 = cfg.number("R_1");
    c.R_2 = cfg.number("R_2");
    c.R_rea = cfg.number("R_rea");
    c.R_reg = cfg.number("R_reg");
    c.E_ac = cfg.number("E_ac");
    c.t_cc = cfg.number("t_cc");
    c.t_ae = cfg.number("t_ae");
    out.actuator.volts_per_unit_duty = cfg.number_or("duty_volts_gain", out.actuator.volts_per_unit_duty);
    out.actuator.duty_max = cfg.number_or("duty_max", out.actuator.duty_max);
    out.actuator.duty_min = cfg.number_or("duty_min", out.actuator.duty_min);
    c.validate();
    out.actuator.validate();
    return out;
}

KeyValueConfig to_config(const PlantConfig& plant) {
    KeyValueConfig cfg;
    const auto& c = plant.circuit;
    cfg.set("L", c.L);
    cfg.set("R_L", c.R_L);
    cfg.set("C", c.C);
    cfg.set("R_c", c.R_c);
    cfg.set("R_1", c.R_1);
    cfg.set("R_2", c.R_2);
    cfg.set("R_rea", c.R_rea);
    cfg.set("R_reg", c.R_reg);
    cfg.set("E_ac", c.E_ac);
    cfg.set("t_cc", c.t_cc);
    cfg.set("t_ae", c.t_ae);
    cfg.set("duty_volts_gain", plant.actuator.volts_per_unit_duty);
    cfg.set("duty_max", plant.actuator.duty_max);
    if (plant.actuator.duty_min != 0.0) cfg.set("duty_min", plant.actuator.duty_min);
    return cfg;
}

PlantConfig load_plant_config(const std::filesystem::path& path) {
    return plant_config_from(KeyValueConfig::load(path));
}

DiscreteSystem discretize(const LinearSystem& sys, double dt) {
    if (!(dt > 0.0)) throw ValidationError("discretization step must be positive");
    const Eigen::Index n = sys.order();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = sys.A * dt;
    aug.topRightCorner(n, 1) = sys.B * dt;
    const Eigen::MatrixXd e = aug.exp();
    return {e.topLeftCorner(n, n), e.topRightCorner(n, 1)};
}

}  // namespace gmaw
