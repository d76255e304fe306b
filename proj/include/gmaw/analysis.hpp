#pragma once

// Tuning verification: closed-loop characteristic polynomials and their
// roots, gain sweeps, simulated settling times against the per-phase specs,
// and the inductor-sizing slope estimate.

#include "gmaw/control.hpp"
#include "gmaw/error.hpp"
#include "gmaw/model.hpp"

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmaw {

struct SettlingSpec {
    double band = 0.05;
    double target_sc = 125e-6;
    double target_ea = 500e-6;
    double sc_tolerance = 1.5;  ///< accepted multiple of target_sc

    void validate() const;
};

/// Tracking error never stayed inside the settling band.
class NeverSettles : public Error {
public:
    explicit NeverSettles(const std::string& what) : Error(ErrorCode::Convergence, what) {}
};

/// Roots of a real polynomial (descending powers) from the eigenvalues of
/// its companion matrix, after rescaling s so the roots are of order one.
std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& coeffs);

/// Sensitivity of a simple root to relative coefficient perturbations.
double root_condition(const std::vector<double>& coeffs, std::complex<double> root);

/// s (1 + T_f s) D_p(s) + [(k_p T_f + k_d) s^2 + (k_p + k_i T_f) s + k_i] N_p(s).
std::vector<double> characteristic_polynomial(const LinearSystem& plant, const PidGains& gains);

struct PoleReport {
    std::vector<double> polynomial;
    std::vector<std::complex<double>> poles;  ///< sorted by real part, slowest last
    double max_condition = 0.0;
    bool ill_conditioned = false;  ///< some root condition number above 1e8

    [[nodiscard]] bool stable() const;
    [[nodiscard]] double slowest_decay() const;  ///< min over poles of -Re
};

PoleReport closed_loop_poles(const LinearSystem& plant, const PidGains& gains);

struct LocusPoint {
    double K_p = 0.0;
    std::vector<std::complex<double>> poles;  ///< branch order consistent across points
    bool stable = false;
    bool ill_conditioned = false;
};

/// Closed-loop poles at n_points log-spaced K_p values; T_i, T_d and T_f come
/// from the template. Poles are matched greedily to the previous point so
/// each index traces one branch.
std::vector<LocusPoint> gain_sweep(const LinearSystem& plant, const PidGains& gains_template, double K_p_min,
                                   double K_p_max, int n_points);

void write_locus_csv(const std::vector<LocusPoint>& locus, std::ostream& out);

/// Single-phase ramp-tracking task starting at a phase onset.
struct RampTask {
    double I_o = 0.0;              ///< inductor current at onset and reference start [A]
    double alpha = 0.0;            ///< reference slope [A/s]
    double horizon = 0.0;          ///< simulated time [s]
    double initial_command = 0.0;  ///< voltage applied just before the onset [V]
};

/// Onset of `phase` inside the switched cycle: SC starts from the arc
/// equilibrium at the base current, EA starts 150 A above it with the
/// command that was ramping the short circuit. Horizon is the nominal phase duration.
RampTask onset_task(const CircuitParams& params, Phase phase, const ReferenceSpec& spec);

struct SettlingResult {
    double settling_time = 0.0;  ///< last instant the error is outside the band [s]
    double band_width = 0.0;     ///< half width of the band [A]
    double steady_error = 0.0;   ///< band centre: mean error over the final 10% [A]
    double peak_error = 0.0;     ///< max |error| over the run [A]
    double tail_error = 0.0;     ///< max |error| over the last 70% [A]
};

/// Simulates the plant under the PID (bumpless start from initial_command,
/// saturating actuator) and measures when the tracking error enters for good
/// a band of half width max(band * |alpha| * horizon, 5 A) around its final
/// mean value. Throws NeverSettles when it still leaves the band in the last
/// 10% of the horizon.
SettlingResult measure_settling(const LinearSystem& plant, const PidGains& gains, const RampTask& task, double band,
                                const ActuatorMap& actuator, double controller_period = 10e-6, double dt_sim = 1e-6);

/// Classical unit-step settling time of the unsaturated sampled loop (band
/// is relative to the step). Throws NeverSettles if not settled by horizon.
double step_settling_time(const LinearSystem& plant, const PidGains& gains, double band,
                          double controller_period = 10e-6, double horizon = 20e-3, double dt_sim = 1e-6);

/// Spectral radius of the sampled plant + discrete PID loop (< 1 is stable).
double discrete_spectral_radius(const LinearSystem& plant, const PidGains& gains, double controller_period);

/// Inductor-sizing baseline di/dt ~ V0 / L [A/s].
double open_loop_slope_estimate(double V0, double L);
/// Inductance that gives `slope` at V0 [H].
double inductance_for_slope(double V0, double slope);

struct TuningRow {
    std::string id;
    std::string description;
    double value = 0.0;
    double limit = 0.0;
    bool pass = false;
    std::string note;
};

struct PhaseTuning {
    Phase phase = Phase::ElectricArc;
    PoleReport poles;
    double spectral_radius = 0.0;
    bool settled = false;
    SettlingResult settling;
    double step_settling = 0.0;  ///< negative when the step never settled
};

struct TuningReport {
    double band = 0.0;
    PhaseTuning sc;
    PhaseTuning ea;
    std::vector<TuningRow> rows;

    [[nodiscard]] bool all_pass() const;
};

/// Ramp-error, SC settling and EA settling checks plus pole tables.
TuningReport verify_tuning(const CircuitParams& params, const ActuatorMap& actuator, const ControllerSettings& settings,
                           const SettlingSpec& spec);

void write_tuning_report(const TuningReport& report, std::ostream& out);
void write_tuning_csv(const TuningReport& report, std::ostream& out);

}  // namespace gmaw
