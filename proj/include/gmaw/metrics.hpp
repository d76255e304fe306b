#pragma once

// Welding performance measures of a current/voltage record: ramp slopes per
// phase, effective (RMS) values, per-cycle peaks and phase durations.

#include "gmaw/error.hpp"
#include "gmaw/waveform.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gmaw {

struct MetricsReport {
    double didt_s = 0.0;      ///< mean SC slope [A/ms]
    double didt_d = 0.0;      ///< mean EA decay slope magnitude [A/ms]
    double i_eff = 0.0;       ///< RMS current [A]
    double v_eff = 0.0;       ///< RMS arc voltage [V]
    double i_peak_avg = 0.0;  ///< mean per-cycle current peak [A]
    double v_peak_avg = 0.0;  ///< mean per-cycle arc-voltage peak [V]
    double dt_ae_avg = 0.0;   ///< mean arc duration [ms]
    double dt_ae_std = 0.0;   ///< sample std of arc durations [ms]
    double dt_cc_avg = 0.0;   ///< mean short-circuit duration [ms]
    double dt_cc_std = 0.0;   ///< sample std of short-circuit durations [ms]
    std::size_t cycle_count = 0;
};

class InsufficientCycles : public Error {
public:
    explicit InsufficientCycles(const std::string& what) : Error(ErrorCode::DataShape, what) {}
};

struct MetricsOptions {
    double tail_fraction = 0.7;     ///< regression uses the last part of the ramp portion
    double knee_fraction = 0.02;    ///< ramp ends where the current is this close (of range) to its in-phase extreme
    double knee_smoothing = 20e-6;  ///< moving-average span used to locate the knee [s]
};

double rms(std::span<const double> x);

/// Least-squares slope of y over t.
double regression_slope(std::span<const double> t, std::span<const double> y);

/// Regression slope [A/s] over the ramp portion of one segment.
double segment_slope(const Waveform& w, const Segment& seg, const MetricsOptions& opt = {});

/// Metrics using the waveform's phase labels. Complete segments only; a
/// cycle is a complete SC segment followed by a complete EA segment.
MetricsReport compute_metrics(const Waveform& w, const MetricsOptions& opt = {});
/// Same, with externally supplied segments (e.g. from offline segmentation).
MetricsReport compute_metrics(const Waveform& w, const std::vector<Segment>& segments, const MetricsOptions& opt = {});

struct MetricsDelta {
    std::string field;
    double a = 0.0;
    double b = 0.0;
    double abs_diff = 0.0;  ///< a - b
    double rel_diff = 0.0;  ///< (a - b) / |b|, 0 when b = 0 and a = b
    bool slope_field = false;
    bool flagged = false;  ///< slope field whose |rel_diff| exceeds the tolerance
};

/// Per-field differences of a against b, the reference.
std::vector<MetricsDelta> compare_reports(const MetricsReport& a, const MetricsReport& b, double slope_tolerance = 0.05);

/// Report whose slopes are the given targets [A/ms] and all other fields zero.
MetricsReport slope_targets(double didt_s, double didt_d);

/// (name, value) pairs in declaration order.
std::vector<std::pair<std::string, double>> report_fields(const MetricsReport& r);

void write_report_table(const MetricsReport& r, std::ostream& out);
void write_report_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports, std::ostream& out);
void write_delta_table(const std::vector<MetricsDelta>& deltas, std::ostream& out);
void write_delta_csv(const std::vector<MetricsDelta>& deltas, std::ostream& out);

}  // namespace gmaw
