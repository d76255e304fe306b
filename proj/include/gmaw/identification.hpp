#pragma once

// Prediction-error identification of the two phase models from a record:
// offline phase segmentation, simulation predictor and a damped Gauss-Newton
// (Levenberg-Marquardt) fit on log-parameters.

#include "gmaw/error.hpp"
#include "gmaw/model.hpp"
#include "gmaw/waveform.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gmaw {

struct ThetaSc {
    double R_1 = 0.0;
    double R_2 = 0.0;
    double C = 0.0;
};

struct ThetaEa {
    double R_sum = 0.0;  ///< R_rea + R_reg
    double E_ac = 0.0;
};

/// Parameters fixed during identification.
struct KnownParams {
    double L = 0.0;
    double R_L = 0.0;
};

ThetaSc theta_sc_of(const CircuitParams& p);
ThetaEa theta_ea_of(const CircuitParams& p);
KnownParams known_of(const CircuitParams& p);

std::vector<double> to_vector(const ThetaSc& th);
std::vector<double> to_vector(const ThetaEa& th);
ThetaSc theta_sc_from(std::span<const double> v);
ThetaEa theta_ea_from(std::span<const double> v);
std::vector<std::string> theta_names(Phase phase);

class NoSegments : public Error {
public:
    explicit NoSegments(const std::string& what) : Error(ErrorCode::DataShape, what) {}
};

struct SegmentationConfig {
    double v_threshold = 14.4;   ///< [V]
    double slope_threshold = 5e3;  ///< [A/s]
    double slope_window = 200e-6;  ///< centered least-squares slope span [s]
    double min_duration = 0.3e-3;  ///< shorter segments are discarded [s]
};

/// Centered least-squares slope of x (span `window` samples, shrinking at the edges) [per second].
std::vector<double> centered_slope(std::span<const double> x, double dt, std::size_t window);

/// Phase segments derived from current and arc voltage only (labels in the
/// record are ignored). SC starts where the slope exceeds slope_threshold
/// while U_arc is below v_threshold; it ends where the slope turns negative,
/// refined to the arc-voltage rise (or the current maximum) nearby.
std::vector<Segment> segment(const Waveform& w, const SegmentationConfig& config = {});

/// Mean durations of complete segments per phase [s]; 0 when none.
struct PhaseDurations {
    double t_cc = 0.0;
    double t_ae = 0.0;
};
PhaseDurations estimate_durations(const std::vector<Segment>& segments, double dt);

/// Simulates the phase model over E_W (held per sample) from i0; v_C starts at 0.
std::vector<double> predict(Phase phase, std::span<const double> theta, const KnownParams& known,
                            std::span<const double> E_W, double i0, double dt);
std::vector<double> predict(const ThetaSc& theta, const KnownParams& known, std::span<const double> E_W, double i0,
                            double dt);
std::vector<double> predict(const ThetaEa& theta, const KnownParams& known, std::span<const double> E_W, double i0,
                            double dt);

struct FitOptions {
    int max_iterations = 500;
    double rel_cost_tol = 1e-10;
    double grad_tol = 1e-8;
    double exclude_fraction = 0.05;  ///< leading share of each segment left out of the cost
    double fd_step = 1e-6;           ///< finite-difference step in log-parameter space
    double max_log_step = 0.5;       ///< largest change of any log-parameter per iteration
    double max_log_excursion = 12.0; ///< stop (not converged) once a parameter drifts this far from theta0 in log
};

struct FitReport {
    Phase phase = Phase::ElectricArc;
    std::vector<std::string> names;
    std::vector<double> theta0;
    std::vector<double> theta_hat;
    double J_N = 0.0;   ///< mean squared prediction error at theta_hat [A^2]
    double J_N0 = 0.0;  ///< same at theta0
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    std::size_t segments_used = 0;
    std::size_t samples_used = 0;
};

/// Mean squared prediction error over the same-phase complete segments.
double prediction_cost(const Waveform& w, const std::vector<Segment>& segments, Phase phase,
                       std::span<const double> theta, const KnownParams& known, double exclude_fraction = 0.05);

/// Minimizes J_N over all complete segments of `phase`. The report carries
/// converged = false when the iteration cap is reached or a parameter runs off.
FitReport fit(const Waveform& w, const std::vector<Segment>& segments, Phase phase, std::span<const double> theta0,
              const KnownParams& known, const FitOptions& options = {});

/// Measured and predicted current over the fitted segments.
void write_residual_csv(const Waveform& w, const std::vector<Segment>& segments, const FitReport& report,
                        const KnownParams& known, std::ostream& out);
void write_fit_report(const FitReport& report, std::ostream& out);

/// Circuit with the fitted parameters substituted. The R_rea/R_reg split of
/// `base` is kept since only the sum is identifiable.
CircuitParams apply_fit(const CircuitParams& base, const FitReport& report);

}  // namespace gmaw
