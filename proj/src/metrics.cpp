#include "gmaw/metrics.hpp"

#include "gmaw/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace gmaw {

double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

double regression_slope(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size() || t.size() < 2) throw DataShapeError("regression needs two or more paired samples");
    const double n = static_cast<double>(t.size());
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        sxy += (t[k] - tm) * (y[k] - ym);
        sxx += (t[k] - tm) * (t[k] - tm);
    }
    return sxy / sxx;
}

double segment_slope(const Waveform& w, const Segment& seg, const MetricsOptions& opt) {
    const std::size_t n = seg.size();
    if (n < 4) throw InsufficientCycles("segment too short for a slope estimate");
    const double dt = w.dt();
    const auto half = static_cast<std::size_t>(std::llround(0.5 * opt.knee_smoothing / dt));

    // Centered moving average (shrinking at the edges) to locate the knee.
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + w.I_W[seg.begin + k];
    std::vector<double> smooth(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= half ? k - half : 0;
        const std::size_t hi = std::min(n, k + half + 1);
        smooth[k] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    const auto [mn, mx] = std::minmax_element(smooth.begin(), smooth.end());
    const double range = *mx - *mn;
    const bool rising = seg.phase == Phase::ShortCircuit;
    const double extreme = rising ? *mx : *mn;
    std::size_t knee = n;
    if (range > 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(smooth[k] - extreme) <= opt.knee_fraction * range) {
                knee = k + 1;
                break;
            }
        }
    }
    std::size_t first = static_cast<std::size_t>(std::floor((1.0 - opt.tail_fraction) * static_cast<double>(knee)));
    if (knee - first < 2) {
        first = 0;
        knee = n;
    }
    return regression_slope(std::span<const double>(w.t).subspan(seg.begin + first, knee - first),
                            std::span<const double>(w.I_W).subspan(seg.begin + first, knee - first));
}

namespace {

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

MetricsReport compute_metrics(const Waveform& w, const MetricsOptions& opt) {
    w.validate();
    return compute_metrics(w, label_runs(w), opt);
}

MetricsReport compute_metrics(const Waveform& w, const std::vector<Segment>& segments, const MetricsOptions& opt) {
    w.validate();
    if (w.size() < 2) throw InsufficientCycles("record has fewer than two samples");
    const double dt = w.dt();
    MetricsReport r;
    r.i_eff = rms(w.I_W);
    r.v_eff = rms(w.U_arc);

    std::vector<double> sc_slopes, ea_slopes, sc_dur, ea_dur, i_peaks, v_peaks;
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const Segment& s = segments[k];
        if (!s.complete) continue;
        const double duration = static_cast<double>(s.size()) * dt * 1e3;
        if (s.phase == Phase::ShortCircuit) {
            sc_slopes.push_back(segment_slope(w, s, opt));
            sc_dur.push_back(duration);
            if (k + 1 < segments.size() && segments[k + 1].complete &&
                segments[k + 1].phase == Phase::ElectricArc && segments[k + 1].begin == s.end) {
                const std::size_t end = segments[k + 1].end;
                i_peaks.push_back(*std::max_element(w.I_W.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                                    w.I_W.begin() + static_cast<std::ptrdiff_t>(end)));
                v_peaks.push_back(*std::max_element(w.U_arc.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                                    w.U_arc.begin() + static_cast<std::ptrdiff_t>(end)));
            }
        } else {
            ea_slopes.push_back(segment_slope(w, s, opt));
            ea_dur.push_back(duration);
        }
    }
    r.cycle_count = i_peaks.size();
    if (r.cycle_count == 0) throw InsufficientCycles("no complete short-circuit + arc cycle in the record");

    r.didt_s = std::max(0.0, mean(sc_slopes) * 1e-3);
    r.didt_d = std::abs(mean(ea_slopes)) * 1e-3;
    r.i_peak_avg = mean(i_peaks);
    r.v_peak_avg = mean(v_peaks);
    r.dt_cc_avg = mean(sc_dur);
    r.dt_cc_std = sample_std(sc_dur);
    r.dt_ae_avg = mean(ea_dur);
    r.dt_ae_std = sample_std(ea_dur);
    return r;
}

std::vector<std::pair<std::string, double>> report_fields(const MetricsReport& r) {
    return {{"didt_s", r.didt_s},
            {"didt_d", r.didt_d},
            {"i_eff", r.i_eff},
            {"v_eff", r.v_eff},
            {"i_peak_avg", r.i_peak_avg},
            {"v_peak_avg", r.v_peak_avg},
            {"dt_ae_avg", r.dt_ae_avg},
            {"dt_ae_std", r.dt_ae_std},
            {"dt_cc_avg", r.dt_cc_avg},
            {"dt_cc_std", r.dt_cc_std},
            {"cycle_count", static_cast<double>(r.cycle_count)}};
}

MetricsReport slope_targets(double didt_s, double didt_d) {
    MetricsReport r;
    r.didt_s = didt_s;
    r.didt_d = didt_d;
    return r;
}

std::vector<MetricsDelta> compare_reports(const MetricsReport& a, const MetricsReport& b, double slope_tolerance) {
    const auto fa = report_fields(a);
    const auto fb = report_fields(b);
    std::vector<MetricsDelta> out;
    for (std::size_t k = 0; k < fa.size(); ++k) {
        MetricsDelta d;
        d.field = fa[k].first;
        d.a = fa[k].second;
        d.b = fb[k].second;
        d.abs_diff = d.a - d.b;
        if (d.b != 0.0) {
            d.rel_diff = d.abs_diff / std::abs(d.b);
        } else {
            d.rel_diff = d.abs_diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d.abs_diff);
        }
        d.slope_field = d.field == "didt_s" || d.field == "didt_d";
        d.flagged = d.slope_field && !(std::abs(d.rel_diff) <= slope_tolerance);
        out.push_back(d);
    }
    return out;
}

namespace {

const char* unit_of(const std::string& field) {
    if (field.rfind("didt", 0) == 0) return "A/ms";
    if (field.rfind("i_", 0) == 0) return "A";
    if (field.rfind("v_", 0) == 0) return "V";
    if (field.rfind("dt_", 0) == 0) return "ms";
    return "";
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

void write_report_table(const MetricsReport& r, std::ostream& out) {
    for (const auto& [name, value] : report_fields(r)) {
        out << pad(name, 14) << pad(name == "cycle_count" ? std::to_string(r.cycle_count) : format_fixed(value, 4), 14)
            << unit_of(name) << '\n';
    }
}

void write_report_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports, std::ostream& out) {
    out << "source";
    if (reports.empty()) {
        out << '\n';
        return;
    }
    for (const auto& [name, value] : report_fields(reports.front().second)) out << ',' << name;
    out << '\n';
    for (const auto& [source, report] : reports) {
        out << source;
        for (const auto& [name, value] : report_fields(report)) out << ',' << format_number(value);
        out << '\n';
    }
}

void write_delta_table(const std::vector<MetricsDelta>& deltas, std::ostream& out) {
    out << pad("field", 14) << pad("a", 14) << pad("b", 14) << pad("a-b", 14) << pad("rel", 12) << "flag\n";
    for (const auto& d : deltas) {
        out << pad(d.field, 14) << pad(format_fixed(d.a, 4), 14) << pad(format_fixed(d.b, 4), 14)
            << pad(format_fixed(d.abs_diff, 4), 14)
            << pad(std::isfinite(d.rel_diff) ? format_fixed(d.rel_diff * 100.0, 2) + "%" : "inf", 12)
            << (d.slope_field ? (d.flagged ? "FAIL" : "ok") : "") << '\n';
    }
}

void write_delta_csv(const std::vector<MetricsDelta>& deltas, std::ostream& out) {
    out << "field,a,b,abs_diff,rel_diff,flagged\n";
    for (const auto& d : deltas) {
        out << d.field << ',' << format_number(d.a) << ',' << format_number(d.b) << ',' << format_number(d.abs_diff) << ','
            << format_number(d.rel_diff) << ',' << (d.flagged ? 1 : 0) << '\n';
    }
}

}  // namespace gmaw
