#include "gmaw/identification.hpp"
#include "gmaw/simulator.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace gmaw;
using Catch::Approx;

namespace {

Waveform record(double duration, double noise_i = 0.0, double noise_v = 0.0, std::uint64_t seed = 0,
                std::size_t stride = 1) {
    SimConfig cfg;
    cfg.duration = duration;
    cfg.noise_std_I = noise_i;
    cfg.noise_std_V = noise_v;
    cfg.seed = seed;
    cfg.record_stride = stride;
    return run_open_loop(CircuitParams::table1(), cfg, 21.1);
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]) / std::abs(b[k]));
    return m;
}

}  // namespace

TEST_CASE("segmentation recovers the switching instants", "[identification]") {
    const Waveform w = record(0.05);
    const auto truth = label_runs(w);
    const auto segs = segment(w);
    std::vector<Segment> t_complete, s_complete;
    std::copy_if(truth.begin(), truth.end(), std::back_inserter(t_complete), [](const Segment& s) { return s.complete; });
    std::copy_if(segs.begin(), segs.end(), std::back_inserter(s_complete), [](const Segment& s) { return s.complete; });
    REQUIRE(s_complete.size() == t_complete.size());
    for (std::size_t k = 0; k < t_complete.size(); ++k) {
        CHECK(s_complete[k].phase == t_complete[k].phase);
        CHECK(std::abs(static_cast<long>(s_complete[k].begin) - static_cast<long>(t_complete[k].begin)) <= 3);
        CHECK(std::abs(static_cast<long>(s_complete[k].end) - static_cast<long>(t_complete[k].end)) <= 3);
    }
}

TEST_CASE("segmentation of a record with no short circuits", "[identification]") {
    Waveform w;
    for (int k = 0; k < 2000; ++k) w.push_back(k * 1e-6, 97.1, 21.1 - 0.043 * 97.1, 21.1, Phase::ElectricArc);
    const auto segs = segment(w);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].phase == Phase::ElectricArc);
    CHECK_FALSE(segs[0].complete);
    CHECK_THROWS_AS(fit(w, segs, Phase::ShortCircuit, to_vector(theta_sc_of(CircuitParams::table1())),
                        known_of(CircuitParams::table1())),
                    NoSegments);
}

TEST_CASE("phase durations from segments", "[identification]") {
    const Waveform w = record(0.1);
    const auto segs = segment(w);
    const auto n_sc = std::count_if(segs.begin(), segs.end(),
                                    [](const Segment& s) { return s.complete && s.phase == Phase::ShortCircuit; });
    CHECK(n_sc == 8);
    const PhaseDurations d = estimate_durations(segs, w.dt());
    CHECK(d.t_cc == Approx(2.5e-3).margin(5e-6));
    CHECK(d.t_ae == Approx(9.5e-3).margin(5e-6));
}

TEST_CASE("predictor", "[identification]") {
    const auto p = CircuitParams::table1();
    const KnownParams known = known_of(p);
    SECTION("matches the simulator inside segments") {
        const Waveform w = record(0.03);
        for (const Segment& s : label_runs(w)) {
            if (!s.complete) continue;
            const std::span<const double> E(w.E_W.data() + s.begin, s.size());
            const auto y = s.phase == Phase::ShortCircuit ? predict(theta_sc_of(p), known, E, w.I_W[s.begin], w.dt())
                                                          : predict(theta_ea_of(p), known, E, w.I_W[s.begin], w.dt());
            REQUIRE(y.size() == s.size());
            for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == Approx(w.I_W[s.begin + k]).epsilon(1e-9));
        }
    }
    SECTION("arc phase is a first-order exponential") {
        const ThetaEa th = theta_ea_of(p);
        const double dt = 1e-6;
        const std::vector<double> E(3000, 21.1);
        const auto y = predict(th, known, E, 250.0, dt);
        const double R = p.R_L + th.R_sum;
        const double i_inf = (21.1 - th.E_ac) / R;
        for (std::size_t k = 0; k < y.size(); k += 250) {
            const double t = static_cast<double>(k) * dt;
            CHECK(y[k] == Approx(i_inf + (250.0 - i_inf) * std::exp(-R / p.L * t)).epsilon(1e-9));
        }
    }
    SECTION("empty input") {
        CHECK(predict(theta_ea_of(p), known, std::span<const double>{}, 100.0, 1e-6).empty());
    }
}

TEST_CASE("noise-free fits recover the parameters", "[identification]") {
    const auto p = CircuitParams::table1();
    const Waveform w = record(0.05);
    const auto segs = segment(w);
    const KnownParams known = known_of(p);

    const auto ea_truth = to_vector(theta_ea_of(p));
    std::vector<double> ea0 = ea_truth;
    for (double& v : ea0) v *= 2.0;
    const FitReport ea = fit(w, segs, Phase::ElectricArc, ea0, known);
    CHECK(ea.converged);
    CHECK(max_rel_error(ea.theta_hat, ea_truth) < 1e-3);
    CHECK(ea.J_N < ea.J_N0);

    const auto sc_truth = to_vector(theta_sc_of(p));
    const std::vector<double> sc0{sc_truth[0] * 1.5, sc_truth[1] * 0.7, sc_truth[2] * 1.3};
    const FitReport sc = fit(w, segs, Phase::ShortCircuit, sc0, known);
    CHECK(sc.converged);
    CHECK(max_rel_error(sc.theta_hat, sc_truth) < 1e-3);
    CHECK(sc.theta_hat.size() == 3);
    CHECK(sc.names == theta_names(Phase::ShortCircuit));

    double mean_sq = 0.0;
    for (double i : w.I_W) mean_sq += i * i;
    mean_sq /= static_cast<double>(w.size());
    CHECK(sc.J_N < 1e-6 * mean_sq);
    CHECK(ea.J_N < 1e-6 * mean_sq);
}

TEST_CASE("fit started at the truth stops immediately", "[identification]") {
    const auto p = CircuitParams::table1();
    const Waveform w = record(0.03);
    const auto segs = label_runs(w);
    const FitReport r = fit(w, segs, Phase::ElectricArc, to_vector(theta_ea_of(p)), known_of(p));
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.J_N == Approx(r.J_N0));
}

TEST_CASE("cost decreases on the way to the optimum", "[identification][property]") {
    const auto p = CircuitParams::table1();
    const Waveform w = record(0.03);
    const auto segs = label_runs(w);
    const KnownParams known = known_of(p);
    const auto truth = to_vector(theta_sc_of(p));
    const double J_truth = prediction_cost(w, segs, Phase::ShortCircuit, truth, known);
    // Along the ray from the truth in log space the cost rises monotonically.
    double prev = J_truth;
    for (double f : {1.05, 1.2, 1.5, 2.0}) {
        std::vector<double> th{truth[0] * f, truth[1] / f, truth[2] * f};
        const double J = prediction_cost(w, segs, Phase::ShortCircuit, th, known);
        CHECK(J > prev);
        prev = J;
    }
    // Iteration limits only cut the descent short.
    std::vector<double> start{truth[0] * 2.0, truth[1] * 0.5, truth[2] * 2.0};
    double last = prediction_cost(w, segs, Phase::ShortCircuit, start, known);
    for (int cap : {1, 3, 10, 100}) {
        FitOptions opt;
        opt.max_iterations = cap;
        const FitReport r = fit(w, segs, Phase::ShortCircuit, start, known, opt);
        CHECK(r.J_N <= last * (1.0 + 1e-12));
        last = r.J_N;
    }
}

TEST_CASE("fit is invariant to a time shift of the record", "[identification][property]") {
    const auto p = CircuitParams::table1();
    Waveform w = record(0.03);
    const auto segs = segment(w);
    std::vector<double> ea0 = to_vector(theta_ea_of(p));
    for (double& v : ea0) v *= 1.5;
    const FitReport a = fit(w, segs, Phase::ElectricArc, ea0, known_of(p));
    for (double& t : w.t) t += 12.345;
    const FitReport b = fit(w, segment(w), Phase::ElectricArc, ea0, known_of(p));
    REQUIRE(a.theta_hat.size() == b.theta_hat.size());
    for (std::size_t k = 0; k < a.theta_hat.size(); ++k) CHECK(b.theta_hat[k] == Approx(a.theta_hat[k]).epsilon(1e-6));
}

TEST_CASE("arc-phase estimate improves with record length", "[identification][property]") {
    const auto p = CircuitParams::table1();
    const auto truth = to_vector(theta_ea_of(p));
    auto spread = [&](double duration) {
        double sum_sq = 0.0;
        const int seeds = 8;
        for (int s = 0; s < seeds; ++s) {
            const Waveform w = record(duration, 5.0, 0.5, static_cast<std::uint64_t>(100 + s), 10);
            const FitReport r = fit(w, segment(w), Phase::ElectricArc, truth, known_of(p));
            const double e = std::log(r.theta_hat[0] / truth[0]);
            sum_sq += e * e;
        }
        return std::sqrt(sum_sq / seeds);
    };
    const double short_run = spread(0.05);
    const double long_run = spread(0.2);
    CHECK(long_run < short_run);
    CHECK(long_run < 0.05);
}

TEST_CASE("noisy fit cost sits near the noise variance", "[identification]") {
    const auto p = CircuitParams::table1();
    const double sigma = 2.0;
    const Waveform w = record(0.1, sigma, 0.0, 7, 10);
    const FitReport r = fit(w, segment(w), Phase::ElectricArc, to_vector(theta_ea_of(p)), known_of(p));
    CHECK(r.converged);
    CHECK(r.J_N == Approx(sigma * sigma).epsilon(0.15));
}

TEST_CASE("fit argument validation", "[identification]") {
    const auto p = CircuitParams::table1();
    const Waveform w = record(0.03);
    const auto segs = segment(w);
    CHECK_THROWS_AS(fit(w, segs, Phase::ElectricArc, std::vector<double>{-0.05, 11.0}, known_of(p)), ValidationError);
    CHECK_THROWS_AS(fit(w, segs, Phase::ShortCircuit, std::vector<double>{0.01, 0.01}, known_of(p)), ValidationError);
    CHECK_THROWS_AS(fit(w, segs, Phase::ElectricArc, std::vector<double>{0.05, 11.0}, KnownParams{0.0, 0.016}),
                    ValidationError);
}

TEST_CASE("applying a fit keeps the arc resistance split", "[identification]") {
    const auto p = CircuitParams::table1();
    FitReport r;
    r.phase = Phase::ElectricArc;
    r.names = theta_names(Phase::ElectricArc);
    r.theta_hat = {0.176, 12.0};
    const CircuitParams q = apply_fit(p, r);
    CHECK(q.R_rea + q.R_reg == Approx(0.176));
    CHECK(q.R_rea / q.R_reg == Approx(p.R_rea / p.R_reg));
    CHECK(q.E_ac == 12.0);
    CHECK(q.R_1 == p.R_1);

    r.phase = Phase::ShortCircuit;
    r.names = theta_names(Phase::ShortCircuit);
    r.theta_hat = {0.02, 0.03, 1.5};
    const CircuitParams s = apply_fit(p, r);
    CHECK(s.R_1 == 0.02);
    CHECK(s.R_2 == 0.03);
    CHECK(s.C == 1.5);
    CHECK(s.E_ac == p.E_ac);
}
