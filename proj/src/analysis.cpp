#include "gmaw/analysis.hpp"

#include "gmaw/kv_config.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace gmaw {

namespace {

using cplx = std::complex<double>;

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

std::vector<double> poly_add(std::vector<double> a, std::vector<double> b) {
    if (a.size() < b.size()) std::swap(a, b);
    const std::size_t off = a.size() - b.size();
    for (std::size_t i = 0; i < b.size(); ++i) a[off + i] += b[i];
    return a;
}

cplx poly_derivative_at(const std::vector<double>& c, cplx s) {
    const std::size_t n = c.size() - 1;
    cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = acc * s + c[i] * static_cast<double>(n - i);
    return acc;
}

std::string fixed(double v, int p) { return format_fixed(v, p); }

std::string us(double seconds) { return fixed(seconds * 1e6, 1); }

}  // namespace

void SettlingSpec::validate() const {
    if (!(band > 0.0 && band < 1.0)) throw ValidationError("settling band must lie in (0, 1)");
    if (!(target_sc > 0.0 && target_ea > 0.0)) throw ValidationError("settling targets must be positive");
    if (!(sc_tolerance >= 1.0)) throw ValidationError("settling tolerance must be >= 1");
}

std::vector<cplx> polynomial_roots(const std::vector<double>& coeffs) {
    std::size_t first = 0;
    while (first < coeffs.size() && coeffs[first] == 0.0) ++first;
    if (first == coeffs.size()) throw ValidationError("zero polynomial has no roots");
    std::vector<double> c(coeffs.begin() + static_cast<std::ptrdiff_t>(first), coeffs.end());

    std::vector<cplx> roots;
    while (c.size() > 1 && c.back() == 0.0) {
        roots.emplace_back(0.0, 0.0);
        c.pop_back();
    }
    const std::size_t n = c.size() - 1;
    if (n == 0) return roots;

    // s = w0 z makes the monic polynomial in z have roots of order one.
    const double w0 = std::pow(std::abs(c[n] / c[0]), 1.0 / static_cast<double>(n));
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double scaled = c[i + 1] / (c[0] * std::pow(w0, static_cast<double>(i + 1)));
        companion(0, static_cast<Eigen::Index>(i)) = -scaled;
    }
    for (std::size_t i = 1; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;

    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    if (es.info() != Eigen::Success) throw SimulationDiverged("companion eigenvalue iteration failed");
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        cplx r = es.eigenvalues()[i] * w0;
        // Newton polish, kept only when it reduces the residual.
        for (int it = 0; it < 3; ++it) {
            const cplx p = polyval(c, r);
            const cplx dp = poly_derivative_at(c, r);
            if (std::abs(dp) == 0.0) break;
            const cplx next = r - p / dp;
            if (!(std::abs(polyval(c, next)) < std::abs(p))) break;
            r = next;
        }
        if (std::abs(r.imag()) <= 1e-14 * std::abs(r)) r.imag(0.0);
        roots.push_back(r);
    }
    return roots;
}

double root_condition(const std::vector<double>& c, cplx root) {
    const std::size_t n = c.size() - 1;
    double scale = 0.0;
    const double mag = std::abs(root);
    for (std::size_t i = 0; i <= n; ++i) scale += std::abs(c[i]) * std::pow(mag, static_cast<double>(n - i));
    const double dp = std::abs(poly_derivative_at(c, root));
    if (mag == 0.0) return dp > 0.0 ? std::abs(c[n]) / dp : 0.0;
    if (dp == 0.0) return std::numeric_limits<double>::infinity();
    return scale / (mag * dp);
}

std::vector<double> characteristic_polynomial(const LinearSystem& plant, const PidGains& g) {
    const TransferFunction tf = plant.transfer_function();
    const std::vector<double> ctrl_den{g.T_f, 1.0, 0.0};  // s (1 + T_f s)
    const std::vector<double> ctrl_num{g.k_p() * g.T_f + g.k_d(), g.k_p() + g.k_i() * g.T_f, g.k_i()};
    return poly_add(poly_mul(ctrl_den, tf.den), poly_mul(ctrl_num, tf.num));
}

bool PoleReport::stable() const {
    return std::all_of(poles.begin(), poles.end(), [](const cplx& p) { return p.real() < 0.0; });
}

double PoleReport::slowest_decay() const {
    double s = std::numeric_limits<double>::infinity();
    for (const auto& p : poles) s = std::min(s, -p.real());
    return s;
}

PoleReport closed_loop_poles(const LinearSystem& plant, const PidGains& gains) {
    gains.validate();
    PoleReport r;
    r.polynomial = characteristic_polynomial(plant, gains);
    r.poles = polynomial_roots(r.polynomial);
    std::sort(r.poles.begin(), r.poles.end(), [](const cplx& a, const cplx& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    for (const auto& p : r.poles) r.max_condition = std::max(r.max_condition, root_condition(r.polynomial, p));
    r.ill_conditioned = r.max_condition > 1e8;
    return r;
}

std::vector<LocusPoint> gain_sweep(const LinearSystem& plant, const PidGains& tmpl, double K_p_min, double K_p_max,
                                   int n_points) {
    if (n_points < 1) throw ValidationError("gain sweep needs at least one point");
    if (!(K_p_min > 0.0 && K_p_max >= K_p_min)) throw ValidationError("gain sweep needs 0 < K_p_min <= K_p_max");
    std::vector<LocusPoint> locus;
    locus.reserve(static_cast<std::size_t>(n_points));
    for (int k = 0; k < n_points; ++k) {
        const double frac = n_points == 1 ? 0.0 : static_cast<double>(k) / (n_points - 1);
        PidGains g = tmpl;
        g.K_p = K_p_min * std::pow(K_p_max / K_p_min, frac);
        const PoleReport pr = closed_loop_poles(plant, g);
        LocusPoint pt{g.K_p, pr.poles, pr.stable(), pr.ill_conditioned};
        if (!locus.empty()) {
            // Greedy nearest-neighbour assignment to the previous point's branches.
            const auto& prev = locus.back().poles;
            std::vector<cplx> remaining = pt.poles;
            std::vector<cplx> ordered;
            for (const auto& p : prev) {
                auto it = std::min_element(remaining.begin(), remaining.end(),
                                           [&](const cplx& a, const cplx& b) { return std::abs(a - p) < std::abs(b - p); });
                ordered.push_back(*it);
                remaining.erase(it);
            }
            pt.poles = ordered;
        }
        locus.push_back(std::move(pt));
    }
    return locus;
}

void write_locus_csv(const std::vector<LocusPoint>& locus, std::ostream& out) {
    out << "K_p,branch,re,im,stable\n";
    for (const auto& pt : locus) {
        for (std::size_t b = 0; b < pt.poles.size(); ++b) {
            out << format_number(pt.K_p) << ',' << b << ',' << format_number(pt.poles[b].real()) << ','
                << format_number(pt.poles[b].imag()) << ',' << (pt.stable ? 1 : 0) << '\n';
        }
    }
}

RampTask onset_task(const CircuitParams& p, Phase phase, const ReferenceSpec& spec) {
    RampTask task;
    if (phase == Phase::ShortCircuit) {
        task.I_o = spec.base_current;
        task.alpha = spec.alpha_sc;
        task.horizon = p.t_cc;
        task.initial_command = p.E_ac + p.arc_loop_resistance() * task.I_o;
    } else {
        task.I_o = spec.base_current + 150.0;
        task.alpha = spec.alpha_ea;
        task.horizon = p.t_ae;
        task.initial_command = p.L * spec.alpha_sc + (p.R_L + p.R_1) * task.I_o;
    }
    return task;
}

SettlingResult measure_settling(const LinearSystem& plant, const PidGains& gains, const RampTask& task, double band,
                                const ActuatorMap& actuator, double controller_period, double dt_sim) {
    if (!(band > 0.0 && band < 1.0)) throw ValidationError("settling band must lie in (0, 1)");
    if (!(task.horizon > 0.0)) throw ValidationError("settling horizon must be positive");
    if (!(dt_sim > 0.0 && controller_period >= dt_sim)) throw ValidationError("invalid settling time steps");
    gains.validate();
    const auto ratio = static_cast<std::size_t>(std::llround(controller_period / dt_sim));
    const auto n = static_cast<std::size_t>(std::llround(task.horizon / dt_sim));
    if (n < 10) throw ValidationError("settling horizon shorter than 10 simulation steps");

    const DiscreteSystem d = discretize(plant, dt_sim);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.order());
    x[kInductorState] = task.I_o;

    ControllerState st;
    st.last_output = task.initial_command;
    st.reset_pending = true;
    double u = task.initial_command;

    std::vector<double> err(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt_sim;
        const double e = task.I_o + task.alpha * t - plant.c.dot(x);
        if (k % ratio == 0) u = pid_step(st, gains, e, static_cast<double>(ratio) * dt_sim, actuator).volts;
        err[k] = e;
        x = d.Ad * x + d.Bd * (u + plant.u0);
        x[kInductorState] = std::max(x[kInductorState], 0.0);
        if (!x.allFinite()) throw SimulationDiverged("settling simulation diverged");
    }

    SettlingResult r;
    const std::size_t tail10 = n - std::max<std::size_t>(1, n / 10);
    r.steady_error = std::accumulate(err.begin() + static_cast<std::ptrdiff_t>(tail10), err.end(), 0.0) /
                     static_cast<double>(n - tail10);
    r.band_width = std::max(band * std::abs(task.alpha) * task.horizon, 5.0);
    const std::size_t tail70 = n - (7 * n) / 10;
    for (std::size_t k = 0; k < n; ++k) {
        r.peak_error = std::max(r.peak_error, std::abs(err[k]));
        if (k >= tail70) r.tail_error = std::max(r.tail_error, std::abs(err[k]));
    }
    std::size_t last_out = n;
    for (std::size_t k = n; k-- > 0;) {
        if (std::abs(err[k] - r.steady_error) > r.band_width) {
            last_out = k;
            break;
        }
    }
    if (last_out == n) {
        r.settling_time = 0.0;
    } else {
        if (last_out >= tail10) throw NeverSettles("tracking error still leaves the settling band at the end of the phase");
        r.settling_time = static_cast<double>(last_out + 1) * dt_sim;
    }
    return r;
}

double step_settling_time(const LinearSystem& plant, const PidGains& g, double band, double controller_period,
                          double horizon, double dt_sim) {
    if (!(band > 0.0 && band < 1.0)) throw ValidationError("settling band must lie in (0, 1)");
    g.validate();
    const auto ratio = static_cast<std::size_t>(std::llround(controller_period / dt_sim));
    const auto n = static_cast<std::size_t>(std::llround(horizon / dt_sim));
    const DiscreteSystem d = discretize(plant, dt_sim);
    const double h = static_cast<double>(ratio) * dt_sim;
    const double a = (2.0 * g.T_f - h) / (2.0 * g.T_f + h);
    const double b = 2.0 * g.k_d() / (2.0 * g.T_f + h);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.order());
    double integ = 0.0, deriv = 0.0, e_prev = 1.0, u = 0.0;
    std::size_t last_out = 0;
    bool ever_out = false;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = 1.0 - plant.c.dot(x);
        if (!std::isfinite(e) || std::abs(e) > 1e6) throw NeverSettles("step response diverges");
        if (k % ratio == 0) {
            deriv = a * deriv + b * (e - e_prev);
            integ += g.k_i() * h * 0.5 * (e + e_prev);
            u = g.k_p() * e + integ + deriv;
            e_prev = e;
        }
        if (std::abs(e) > band) {
            last_out = k;
            ever_out = true;
        }
        x = d.Ad * x + d.Bd * u;
    }
    if (!ever_out) return 0.0;
    if (last_out >= n - n / 10) throw NeverSettles("step response not settled within the horizon");
    return static_cast<double>(last_out + 1) * dt_sim;
}

double discrete_spectral_radius(const LinearSystem& plant, const PidGains& g, double h) {
    const DiscreteSystem d = discretize(plant, h);
    const Eigen::Index n = plant.order();
    const double a = (2.0 * g.T_f - h) / (2.0 * g.T_f + h);
    const double b = 2.0 * g.k_d() / (2.0 * g.T_f + h);
    const double ki2 = g.k_i() * h * 0.5;
    // z = [x, I_prev, D_prev, e_prev]; e = -c x for a zero reference.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::RowVectorXd e_row = Eigen::RowVectorXd::Zero(n + 3);
    e_row.head(n) = -plant.c;
    Eigen::RowVectorXd I_row = Eigen::RowVectorXd::Zero(n + 3);
    I_row = ki2 * e_row;
    I_row[n] += 1.0;
    I_row[n + 2] += ki2;
    Eigen::RowVectorXd D_row = b * e_row;
    D_row[n + 1] += a;
    D_row[n + 2] -= b;
    const Eigen::RowVectorXd u_row = g.k_p() * e_row + I_row + D_row;
    M.topRows(n) = d.Bd * u_row;
    M.topLeftCorner(n, n) += d.Ad;
    M.row(n) = I_row;
    M.row(n + 1) = D_row;
    M.row(n + 2) = e_row;
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double open_loop_slope_estimate(double V0, double L) {
    if (!(L > 0.0)) throw ValidationError("inductance must be positive");
    return V0 / L;
}

double inductance_for_slope(double V0, double slope) {
    if (!(slope > 0.0)) throw ValidationError("target slope must be positive");
    return V0 / slope;
}

bool TuningReport::all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const TuningRow& r) { return r.pass; });
}

TuningReport verify_tuning(const CircuitParams& params, const ActuatorMap& actuator, const ControllerSettings& settings,
                           const SettlingSpec& spec) {
    spec.validate();
    params.validate();
    TuningReport rep;
    rep.band = spec.band;

    auto analyse = [&](Phase phase) {
        PhaseTuning pt;
        pt.phase = phase;
        const LinearSystem plant = phase == Phase::ShortCircuit ? sc_transfer(params) : ea_transfer(params);
        const PidGains& g = settings.gains.for_phase(phase);
        pt.poles = closed_loop_poles(plant, g);
        pt.spectral_radius = discrete_spectral_radius(plant, g, settings.controller_period);
        try {
            pt.settling = measure_settling(plant, g, onset_task(params, phase, settings.reference), spec.band, actuator,
                                           settings.controller_period);
            pt.settled = true;
        } catch (const Error&) {
            pt.settled = false;
        }
        try {
            pt.step_settling = step_settling_time(plant, g, spec.band, settings.controller_period);
        } catch (const Error&) {
            pt.step_settling = -1.0;
        }
        return pt;
    };
    rep.sc = analyse(Phase::ShortCircuit);
    rep.ea = analyse(Phase::ElectricArc);

    auto stable = [](const PhaseTuning& pt) { return pt.poles.stable() && pt.spectral_radius < 1.0; };
    for (const PhaseTuning* pt : {&rep.sc, &rep.ea}) {
        const std::string label{phase_label(pt->phase)};
        TuningRow row{"stability_" + label, label + " slowest closed-loop decay rate [1/s], must be > 0 with a sampled-loop spectral radius < 1",
                      pt->poles.slowest_decay(), 0.0, stable(*pt), ""};
        row.note = "spectral radius " + fixed(pt->spectral_radius, 6);
        if (pt->poles.ill_conditioned) row.note += "; ill-conditioned polynomial";
        rep.rows.push_back(row);
    }

    const double tail = std::max(rep.sc.settling.tail_error, rep.ea.settling.tail_error);
    rep.rows.push_back({"ramp_error", "finite ramp tracking error over the last 70% of each phase [A]", tail, 30.0,
                        rep.sc.settled && rep.ea.settled && stable(rep.sc) && stable(rep.ea) && tail < 30.0,
                        "max |e| of both phases"});
    TuningRow sc_row{"settling_SC", "SC settling time [us]", rep.sc.settling.settling_time * 1e6,
                     spec.target_sc * spec.sc_tolerance * 1e6, false, ""};
    sc_row.pass = rep.sc.settled && stable(rep.sc) && rep.sc.settling.settling_time <= spec.target_sc * spec.sc_tolerance;
    sc_row.note = "target " + us(spec.target_sc) + " us with tolerance x" + fixed(spec.sc_tolerance, 2) +
                  " for plant-model and band-convention ambiguity";
    if (!rep.sc.settled) sc_row.note = "never settles; " + sc_row.note;
    rep.rows.push_back(sc_row);
    TuningRow ea_row{"settling_EA", "EA settling time [us]", rep.ea.settling.settling_time * 1e6,
                     spec.target_ea * 1e6, false, ""};
    ea_row.pass = rep.ea.settled && stable(rep.ea) && rep.ea.settling.settling_time <= spec.target_ea;
    ea_row.note = rep.ea.settled ? "" : "never settles";
    rep.rows.push_back(ea_row);
    return rep;
}

void write_tuning_report(const TuningReport& rep, std::ostream& out) {
    out << "Tuning verification, settling band " << fixed(rep.band * 100.0, 1) << "%\n\n";
    for (const auto& r : rep.rows) {
        out << (r.pass ? "PASS " : "FAIL ") << r.id;
        out << std::string(r.id.size() < 20 ? 20 - r.id.size() : 1, ' ') << fixed(r.value, 3) << " (limit "
            << fixed(r.limit, 3) << ")  " << r.description;
        if (!r.note.empty()) out << "  [" << r.note << "]";
        out << '\n';
    }
    for (const PhaseTuning* pt : {&rep.sc, &rep.ea}) {
        out << "\n" << phase_label(pt->phase) << " phase\n";
        if (pt->settled) {
            out << "  ramp settling " << us(pt->settling.settling_time) << " us, band +/-"
                << fixed(pt->settling.band_width, 2) << " A around steady error " << fixed(pt->settling.steady_error, 3)
                << " A, peak |e| " << fixed(pt->settling.peak_error, 3) << " A\n";
        } else {
            out << "  ramp settling: never settles\n";
        }
        out << "  unit-step settling (informational) ";
        if (pt->step_settling >= 0.0) {
            out << us(pt->step_settling) << " us\n";
        } else {
            out << "never settles\n";
        }
        out << "  sampled-loop spectral radius " << fixed(pt->spectral_radius, 6) << "\n  closed-loop poles [1/s]:\n";
        for (const auto& p : pt->poles.poles) {
            out << "    " << format_number(p.real()) << (p.imag() < 0 ? " - " : " + ") << format_number(std::abs(p.imag()))
                << "j\n";
        }
        if (pt->poles.ill_conditioned) {
            out << "  warning: root condition number " << format_number(pt->poles.max_condition) << " exceeds 1e8\n";
        }
    }
}

void write_tuning_csv(const TuningReport& rep, std::ostream& out) {
    out << "id,value,limit,pass,band\n";
    for (const auto& r : rep.rows) {
        out << r.id << ',' << format_number(r.value) << ',' << format_number(r.limit) << ',' << (r.pass ? 1 : 0) << ','
            << format_number(rep.band) << '\n';
    }
}

}  // namespace gmaw
