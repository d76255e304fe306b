#pragma once

// Switched equivalent-circuit model of the welding joint.
//
// Short-circuit phase: source E_W drives L, R_L, R_1 in series with the
// parallel pair (R_2 || C). Electric-arc phase: E_W minus the constant arc
// voltage E_ac drives L in series with R_L + R_rea + R_reg. In both
// realizations state 0 is the inductor current, which is also the output.

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <vector>

namespace gmaw {

class KeyValueConfig;

/// Electrical constants of the switched circuit, SI units.
struct CircuitParams {
    double L = 0.0;      ///< source inductance [H]
    double R_L = 0.0;    ///< source resistance [ohm]
    double C = 0.0;      ///< short-circuit capacitance [F]
    double R_c = 0.0;    ///< capacitor series resistance [ohm]; stored, not used by the dynamics
    double R_1 = 0.0;    ///< short-circuit series resistance [ohm]
    double R_2 = 0.0;    ///< short-circuit shunt resistance [ohm]
    double R_rea = 0.0;  ///< arc resistance [ohm]
    double R_reg = 0.0;  ///< re-ignition resistance [ohm]
    double E_ac = 0.0;   ///< constant arc voltage [V]
    double t_cc = 0.0;   ///< nominal short-circuit duration [s]
    double t_ae = 0.0;   ///< nominal arc duration [s]

    /// Throws ValidationError if any invariant is violated.
    void validate() const;

    /// Total series resistance seen by the arc-phase loop.
    [[nodiscard]] double arc_loop_resistance() const { return R_L + R_rea + R_reg; }

    /// Identified values for the reference welding source.
    static CircuitParams table1();
};

/// Linear duty-cycle to average source-voltage map of the converter.
struct ActuatorMap {
    double volts_per_unit_duty = 200.0;
    double duty_min = 0.0;
    double duty_max = 0.5;

    void validate() const;
    [[nodiscard]] double volts_min() const { return volts_per_unit_duty * duty_min; }
    [[nodiscard]] double volts_max() const { return volts_per_unit_duty * duty_max; }
};

struct DutyCommand {
    double duty = 0.0;
    bool saturated = false;
};

double duty_to_volts(const ActuatorMap& map, double duty);
/// Inverse map, clamped to [duty_min, duty_max]; `saturated` reports clamping.
DutyCommand volts_to_duty(const ActuatorMap& map, double volts);

/// Rational function in s; coefficients in descending powers.
struct TransferFunction {
    std::vector<double> num;
    std::vector<double> den;

    [[nodiscard]] std::complex<double> operator()(std::complex<double> s) const;
};

/// Evaluates a polynomial (descending powers) with Horner's scheme.
std::complex<double> polyval(const std::vector<double>& coeffs, std::complex<double> s);

/// Continuous-time SISO state-space system
///   x' = A x + B (u + u0),  y = c x + d (u + u0).
struct LinearSystem {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd c;
    double d = 0.0;
    double u0 = 0.0;

    [[nodiscard]] Eigen::Index order() const { return A.rows(); }
    [[nodiscard]] std::complex<double> frequency_response(double omega) const;
    [[nodiscard]] std::complex<double> evaluate(std::complex<double> s) const;
    /// Output per unit input at s = 0, ignoring u0.
    [[nodiscard]] double dc_gain() const;
    /// Steady-state output for a constant input u (includes u0).
    [[nodiscard]] double steady_state_output(double u) const;
    [[nodiscard]] Eigen::VectorXcd poles() const;
    [[nodiscard]] bool is_stable() const;
    /// Numerator and characteristic polynomial via Faddeev-LeVerrier.
    [[nodiscard]] TransferFunction transfer_function() const;
};

/// Zero-order-hold discretization x[k+1] = Ad x[k] + Bd (u[k] + u0).
struct DiscreteSystem {
    Eigen::MatrixXd Ad;
    Eigen::VectorXd Bd;
};

DiscreteSystem discretize(const LinearSystem& sys, double dt);

/// Index of the inductor current in the state vector of both phase systems.
inline constexpr Eigen::Index kInductorState = 0;

/// Short-circuit phase realization; states (i_L, v_C).
LinearSystem sc_transfer(const CircuitParams& params);
/// Electric-arc phase realization; state i_L, input offset -E_ac.
LinearSystem ea_transfer(const CircuitParams& params);

/// Circuit plus actuator, the content of a `.params` file.
struct PlantConfig {
    CircuitParams circuit;
    ActuatorMap actuator;
};

PlantConfig plant_config_from(const KeyValueConfig& cfg);
KeyValueConfig to_config(const PlantConfig& plant);
PlantConfig load_plant_config(const std::filesystem::path& path);

}  // namespace gmaw
