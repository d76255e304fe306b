#include "gmaw/identification.hpp"

#include "gmaw/kv_config.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace gmaw {

ThetaSc theta_sc_of(const CircuitParams& p) { return {p.R_1, p.R_2, p.C}; }
ThetaEa theta_ea_of(const CircuitParams& p) { return {p.R_rea + p.R_reg, p.E_ac}; }
KnownParams known_of(const CircuitParams& p) { return {p.L, p.R_L}; }

std::vector<double> to_vector(const ThetaSc& th) { return {th.R_1, th.R_2, th.C}; }
std::vector<double> to_vector(const ThetaEa& th) { return {th.R_sum, th.E_ac}; }

ThetaSc theta_sc_from(std::span<const double> v) {
    if (v.size() != 3) throw ValidationError("short-circuit parameter vector needs 3 entries");
    return {v[0], v[1], v[2]};
}

ThetaEa theta_ea_from(std::span<const double> v) {
    if (v.size() != 2) throw ValidationError("arc parameter vector needs 2 entries");
    return {v[0], v[1]};
}

std::vector<std::string> theta_names(Phase phase) {
    if (phase == Phase::ShortCircuit) return {"R_1", "R_2", "C"};
    return {"R_sum", "E_ac"};
}

std::vector<double> centered_slope(std::span<const double> x, double dt, std::size_t window) {
    const std::size_t n = x.size();
    const std::size_t half = std::max<std::size_t>(1, window / 2);
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    // Prefix sums of x and k*x give each window's regression in O(1).
    std::vector<double> s0(n + 1, 0.0), s1(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        s0[k + 1] = s0[k] + x[k];
        s1[k + 1] = s1[k] + static_cast<double>(k) * x[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= half ? k - half : 0;
        const std::size_t hi = std::min(n - 1, k + half);
        const double m = static_cast<double>(hi - lo + 1);
        if (m < 2) continue;
        const double kbar = 0.5 * static_cast<double>(lo + hi);
        const double sx = s0[hi + 1] - s0[lo];
        const double skx = s1[hi + 1] - s1[lo];
        const double sxx = m * (m * m - 1.0) / 12.0;
        out[k] = (skx - kbar * sx) / (sxx * dt);
    }
    return out;
}

std::vector<Segment> segment(const Waveform& w, const SegmentationConfig& cfg) {
    w.validate();
    const std::size_t n = w.size();
    if (n < 2) throw NoSegments("record too short to segment");
    const double dt = w.dt();
    const auto window = std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(cfg.slope_window / dt)));
    const std::vector<double> slope = centered_slope(w.I_W, dt, window);
    const std::size_t reach = window / 2 + 1;

    std::vector<std::pair<std::size_t, std::size_t>> sc;  // [begin, end)
    bool in_sc = false;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!in_sc) {
            if (slope[k] > cfg.slope_threshold && w.U_arc[k] < cfg.v_threshold) {
                in_sc = true;
                start = k;
            }
            continue;
        }
        if (slope[k] >= 0.0) continue;
        // The arc re-ignites where U_arc climbs back over the threshold.
        const std::size_t lo = std::max(start + 1, k > reach ? k - reach : 0);
        const std::size_t hi = std::min(n, k + reach);
        std::size_t end = hi;
        bool found = false;
        for (std::size_t j = lo; j < hi; ++j) {
            if (w.U_arc[j] >= cfg.v_threshold && w.U_arc[j - 1] < cfg.v_threshold) {
                end = j;
                found = true;
                break;
            }
        }
        if (!found) {
            const auto peak = std::max_element(w.I_W.begin() + static_cast<std::ptrdiff_t>(lo),
                                               w.I_W.begin() + static_cast<std::ptrdiff_t>(hi));
            end = static_cast<std::size_t>(peak - w.I_W.begin()) + 1;
        }
        sc.emplace_back(start, end);
        in_sc = false;
        k = std::max(k, end);
    }
    if (in_sc) sc.emplace_back(start, n);

    std::vector<Segment> all;
    std::size_t cursor = 0;
    for (const auto& [b, e] : sc) {
        if (b > cursor) all.push_back({cursor, b, Phase::ElectricArc, false});
        all.push_back({b, e, Phase::ShortCircuit, false});
        cursor = e;
    }
    if (cursor < n) all.push_back({cursor, n, Phase::ElectricArc, false});

    const auto min_len = static_cast<std::size_t>(std::ceil(cfg.min_duration / dt - 1e-9));
    std::vector<Segment> out;
    for (Segment s : all) {
        if (s.size() < min_len) continue;
        s.complete = s.begin > 0 && s.end < n;
        out.push_back(s);
    }
    if (out.empty()) throw NoSegments("no phase segment of at least " + format_number(cfg.min_duration * 1e3) + " ms");
    return out;
}

PhaseDurations estimate_durations(const std::vector<Segment>& segments, double dt) {
    double sum_sc = 0.0, sum_ea = 0.0;
    std::size_t n_sc = 0, n_ea = 0;
    for (const auto& s : segments) {
        if (!s.complete) continue;
        if (s.phase == Phase::ShortCircuit) {
            sum_sc += static_cast<double>(s.size()) * dt;
            ++n_sc;
        } else {
            sum_ea += static_cast<double>(s.size()) * dt;
            ++n_ea;
        }
    }
    return {n_sc ? sum_sc / static_cast<double>(n_sc) : 0.0, n_ea ? sum_ea / static_cast<double>(n_ea) : 0.0};
}

std::vector<double> predict(const ThetaSc& th, const KnownParams& known, std::span<const double> E_W, double i0,
                            double dt) {
    std::vector<double> out(E_W.size());
    if (E_W.empty()) return out;
    Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
    aug(0, 0) = -(known.R_L + th.R_1) / known.L;
    aug(0, 1) = -1.0 / known.L;
    aug(1, 0) = 1.0 / th.C;
    aug(1, 1) = -1.0 / (th.C * th.R_2);
    aug(0, 2) = 1.0 / known.L;
    const Eigen::Matrix3d e = (aug * dt).exp();
    const Eigen::Matrix2d Ad = e.topLeftCorner<2, 2>();
    const Eigen::Vector2d Bd = e.topRightCorner<2, 1>();
    Eigen::Vector2d x(i0, 0.0);
    for (std::size_t k = 0; k < E_W.size(); ++k) {
        out[k] = x[0];
        x = Ad * x + Bd * E_W[k];
        x[0] = std::max(x[0], 0.0);
    }
    return out;
}

std::vector<double> predict(const ThetaEa& th, const KnownParams& known, std::span<const double> E_W, double i0,
                            double dt) {
    std::vector<double> out(E_W.size());
    const double R = known.R_L + th.R_sum;
    const double a = std::exp(-R / known.L * dt);
    const double b = -std::expm1(-R / known.L * dt) / R;
    double i = i0;
    for (std::size_t k = 0; k < E_W.size(); ++k) {
        out[k] = i;
        i = std::max(a * i + b * (E_W[k] - th.E_ac), 0.0);
    }
    return out;
}

std::vector<double> predict(Phase phase, std::span<const double> theta, const KnownParams& known,
                            std::span<const double> E_W, double i0, double dt) {
    if (phase == Phase::ShortCircuit) return predict(theta_sc_from(theta), known, E_W, i0, dt);
    return predict(theta_ea_from(theta), known, E_W, i0, dt);
}

namespace {

struct Problem {
    const Waveform& w;
    std::vector<Segment> segs;
    Phase phase;
    KnownParams known;
    double dt;
    double exclude;

    [[nodiscard]] std::size_t skip(const Segment& s) const {
        return static_cast<std::size_t>(std::floor(exclude * static_cast<double>(s.size())));
    }

    [[nodiscard]] std::size_t residual_count() const {
        std::size_t m = 0;
        for (const auto& s : segs) m += s.size() - skip(s);
        return m;
    }

    [[nodiscard]] Eigen::VectorXd residuals(std::span<const double> theta) const {
        Eigen::VectorXd r(static_cast<Eigen::Index>(residual_count()));
        Eigen::Index row = 0;
        for (const auto& s : segs) {
            const auto E = std::span<const double>(w.E_W).subspan(s.begin, s.size());
            const std::vector<double> pred = predict(phase, theta, known, E, w.I_W[s.begin], dt);
            for (std::size_t k = skip(s); k < s.size(); ++k) r[row++] = pred[k] - w.I_W[s.begin + k];
        }
        if (!r.allFinite()) throw SimulationDiverged("prediction became non-finite");
        return r;
    }
};

Problem make_problem(const Waveform& w, const std::vector<Segment>& segments, Phase phase, const KnownParams& known,
                     double exclude) {
    w.validate();
    if (!(known.L > 0.0) || !(known.R_L > 0.0)) throw ValidationError("known L and R_L must be positive");
    Problem p{w, {}, phase, known, w.dt(), exclude};
    for (const auto& s : segments) {
        if (s.phase == phase && s.complete && s.size() >= 2) p.segs.push_back(s);
    }
    if (p.segs.empty()) {
        throw NoSegments(std::string("no complete ") + std::string(phase_label(phase)) + " segment in the record");
    }
    return p;
}

void check_feasible(Phase phase, std::span<const double> theta) {
    const std::size_t want = phase == Phase::ShortCircuit ? 3 : 2;
    if (theta.size() != want) throw ValidationError("initial parameter vector has the wrong length");
    for (double v : theta) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("initial parameters must be finite and positive");
    }
}

}  // namespace

double prediction_cost(const Waveform& w, const std::vector<Segment>& segments, Phase phase,
                       std::span<const double> theta, const KnownParams& known, double exclude_fraction) {
    const Problem p = make_problem(w, segments, phase, known, exclude_fraction);
    const Eigen::VectorXd r = p.residuals(theta);
    return r.squaredNorm() / static_cast<double>(r.size());
}

FitReport fit(const Waveform& w, const std::vector<Segment>& segments, Phase phase, std::span<const double> theta0,
              const KnownParams& known, const FitOptions& opt) {
    check_feasible(phase, theta0);
    const Problem prob = make_problem(w, segments, phase, known, opt.exclude_fraction);
    const auto P = static_cast<Eigen::Index>(theta0.size());

    FitReport rep;
    rep.phase = phase;
    rep.names = theta_names(phase);
    rep.theta0.assign(theta0.begin(), theta0.end());
    rep.segments_used = prob.segs.size();
    rep.samples_used = prob.residual_count();
    const double N = static_cast<double>(rep.samples_used);

    auto theta_of = [](const Eigen::VectorXd& p) {
        std::vector<double> th(static_cast<std::size_t>(p.size()));
        for (Eigen::Index i = 0; i < p.size(); ++i) th[static_cast<std::size_t>(i)] = std::exp(p[i]);
        return th;
    };

    Eigen::VectorXd p(P);
    for (Eigen::Index i = 0; i < P; ++i) p[i] = std::log(theta0[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd p0 = p;
    Eigen::VectorXd r = prob.residuals(theta_of(p));
    double cost = r.squaredNorm() / N;
    rep.J_N0 = cost;
    double lambda = 1e-3;

    rep.stop_reason = "iteration limit";
    for (rep.iterations = 0; rep.iterations < opt.max_iterations;) {
        if (cost == 0.0) {
            rep.converged = true;
            rep.stop_reason = "zero cost";
            break;
        }
        Eigen::MatrixXd J(r.size(), P);
        for (Eigen::Index j = 0; j < P; ++j) {
            Eigen::VectorXd pp = p, pm = p;
            pp[j] += opt.fd_step;
            pm[j] -= opt.fd_step;
            J.col(j) = (prob.residuals(theta_of(pp)) - prob.residuals(theta_of(pm))) / (2.0 * opt.fd_step);
        }
        const Eigen::VectorXd JtR = J.transpose() * r;
        const double grad_norm = (2.0 / N) * JtR.norm();
        if (grad_norm < opt.grad_tol) {
            rep.converged = true;
            rep.stop_reason = "gradient norm";
            break;
        }
        const Eigen::MatrixXd H = J.transpose() * J;
        Eigen::VectorXd scale = H.diagonal().cwiseMax(1e-12 * std::max(1.0, H.diagonal().maxCoeff()));

        ++rep.iterations;
        bool accepted = false;
        bool done = false;
        while (!accepted) {
            Eigen::MatrixXd Hd = H;
            Hd.diagonal() += lambda * scale;
            Eigen::VectorXd step = Hd.ldlt().solve(-JtR);
            // Bounded log-step: R_2 -> infinity is a flat plateau one
            // undamped step can land on and never leave.
            const double longest = step.cwiseAbs().maxCoeff();
            if (longest > opt.max_log_step) step *= opt.max_log_step / longest;
            const Eigen::VectorXd p_new = p + step;
            double cost_new = std::numeric_limits<double>::infinity();
            Eigen::VectorXd r_new;
            if (step.allFinite() && p_new.cwiseAbs().maxCoeff() < 700.0) {
                try {
                    r_new = prob.residuals(theta_of(p_new));
                    cost_new = r_new.squaredNorm() / N;
                } catch (const SimulationDiverged&) {
                    cost_new = std::numeric_limits<double>::infinity();
                }
            }
            if (cost_new < cost) {
                const double rel = (cost - cost_new) / cost;
                p = p_new;
                r = std::move(r_new);
                cost = cost_new;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel < opt.rel_cost_tol) {
                    rep.converged = true;
                    rep.stop_reason = "relative cost decrease";
                    done = true;
                }
            } else {
                lambda *= 4.0;
                if (lambda > 1e16) {
                    // No descent direction resolvable at working precision.
                    rep.converged = true;
                    rep.stop_reason = "no further decrease";
                    done = true;
                    break;
                }
            }
        }
        if (done) break;
        if ((p - p0).cwiseAbs().maxCoeff() > opt.max_log_excursion) {
            rep.stop_reason = "parameter unbounded";
            break;
        }
    }
    rep.theta_hat = theta_of(p);
    rep.J_N = cost;
    return rep;
}

void write_residual_csv(const Waveform& w, const std::vector<Segment>& segments, const FitReport& report,
                        const KnownParams& known, std::ostream& out) {
    const double dt = w.dt();
    out << "t_s,I_meas,I_pred,residual\n";
    for (const auto& s : segments) {
        if (s.phase != report.phase || !s.complete || s.size() < 2) continue;
        const auto E = std::span<const double>(w.E_W).subspan(s.begin, s.size());
        const std::vector<double> pred = predict(report.phase, report.theta_hat, known, E, w.I_W[s.begin], dt);
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double meas = w.I_W[s.begin + k];
            out << format_number(w.t[s.begin + k]) << ',' << format_number(meas) << ',' << format_number(pred[k]) << ','
                << format_number(pred[k] - meas) << '\n';
        }
    }
}

void write_fit_report(const FitReport& rep, std::ostream& out) {
    KeyValueConfig cfg;
    cfg.set("phase", std::string(phase_label(rep.phase)));
    for (std::size_t i = 0; i < rep.names.size(); ++i) {
        cfg.set(rep.names[i], rep.theta_hat[i]);
        cfg.set(rep.names[i] + ".initial", rep.theta0[i]);
    }
    cfg.set("J_N", rep.J_N);
    cfg.set("J_N_initial", rep.J_N0);
    cfg.set("iterations", static_cast<double>(rep.iterations));
    cfg.set("converged", std::string(rep.converged ? "true" : "false"));
    cfg.set("stop_reason", rep.stop_reason);
    cfg.set("segments_used", static_cast<double>(rep.segments_used));
    cfg.set("samples_used", static_cast<double>(rep.samples_used));
    out << cfg.to_string();
}

CircuitParams apply_fit(const CircuitParams& base, const FitReport& rep) {
    CircuitParams p = base;
    if (rep.phase == Phase::ShortCircuit) {
        const ThetaSc th = theta_sc_from(rep.theta_hat);
        p.R_1 = th.R_1;
        p.R_2 = th.R_2;
        p.C = th.C;
    } else {
        const ThetaEa th = theta_ea_from(rep.theta_hat);
        const double ratio = th.R_sum / (base.R_rea + base.R_reg);
        p.R_rea = base.R_rea * ratio;
        p.R_reg = base.R_reg * ratio;
        p.E_ac = th.E_ac;
    }
    return p;
}

}  // namespace gmaw
