#include "gmaw/control.hpp"
#include "gmaw/metrics.hpp"
#include "gmaw/simulator.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace gmaw;
using Catch::Approx;

namespace {

Waveform open_loop(double duration = 0.1) {
    SimConfig cfg;
    cfg.duration = duration;
    return run_open_loop(CircuitParams::table1(), cfg, 21.1);
}

Waveform closed_loop(const SwitchedGains& gains, double duration = 0.1) {
    SimConfig cfg;
    cfg.duration = duration;
    ControllerSettings s;
    s.gains = gains;
    return simulate_switched_pid(CircuitParams::table1(), ActuatorMap{}, cfg, s);
}

}  // namespace

TEST_CASE("rms and regression oracles", "[metrics]") {
    std::vector<double> sine(10000);
    for (std::size_t k = 0; k < sine.size(); ++k)
        sine[k] = 3.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / 100.0);
    CHECK(rms(sine) == Approx(3.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(rms(std::vector<double>(17, -4.0)) == Approx(4.0));

    std::vector<double> t(500), y(500);
    for (std::size_t k = 0; k < t.size(); ++k) {
        t[k] = 1e-6 * static_cast<double>(k);
        y[k] = 120.0 + 60e3 * t[k];
    }
    CHECK(std::abs(regression_slope(t, y) - 60e3) < 1e-9 * 60e3);
    CHECK_THROWS(regression_slope(std::vector<double>{1.0}, std::vector<double>{1.0}));
}

TEST_CASE("open-loop record durations and slopes", "[metrics]") {
    const MetricsReport r = compute_metrics(open_loop());
    CHECK(r.cycle_count == 7);
    CHECK(r.dt_cc_avg == Approx(2.5).margin(1e-3));
    CHECK(r.dt_cc_std == Approx(0.0).margin(1e-9));
    CHECK(r.dt_ae_avg == Approx(9.5).margin(1e-3));
    CHECK(r.didt_s > 60.0);
    CHECK(r.didt_d > 0.0);
}

TEST_CASE("closed-loop slopes hit the reference ramps", "[metrics]") {
    for (const auto& g : {SwitchedGains::table2(), SwitchedGains::table3()}) {
        const MetricsReport r = compute_metrics(closed_loop(g));
        CHECK(r.didt_s >= 57.0);
        CHECK(r.didt_s <= 63.0);
        CHECK(r.didt_d >= 19.0);
        CHECK(r.didt_d <= 21.0);
        CHECK(r.cycle_count >= 6);
    }
}

TEST_CASE("peaks bound the effective values", "[metrics][property]") {
    for (const Waveform& w : {open_loop(), closed_loop(SwitchedGains::table2())}) {
        const MetricsReport r = compute_metrics(w);
        CHECK(r.i_eff <= *std::max_element(w.I_W.begin(), w.I_W.end()));
        CHECK(r.i_peak_avg <= *std::max_element(w.I_W.begin(), w.I_W.end()));
        CHECK(r.i_peak_avg >= r.i_eff * 0.5);
        CHECK(r.v_peak_avg <= *std::max_element(w.U_arc.begin(), w.U_arc.end()));
        CHECK(r.v_eff > 0.0);
    }
}

TEST_CASE("metrics ignore a time offset", "[metrics][property]") {
    Waveform w = open_loop(0.05);
    const MetricsReport a = compute_metrics(w);
    for (double& t : w.t) t += 3.75;
    const MetricsReport b = compute_metrics(w);
    const auto fa = report_fields(a);
    const auto fb = report_fields(b);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t k = 0; k < fa.size(); ++k) CHECK(fb[k].second == Approx(fa[k].second).epsilon(1e-6).margin(1e-9));
}

TEST_CASE("records without a full cycle are rejected", "[metrics]") {
    const Waveform w = open_loop(0.01);
    CHECK_THROWS_AS(compute_metrics(w), InsufficientCycles);
    Waveform constant;
    for (int k = 0; k < 1000; ++k) constant.push_back(k * 1e-6, 100.0, 17.0, 21.1, Phase::ElectricArc);
    CHECK_THROWS_AS(compute_metrics(constant), InsufficientCycles);
}

TEST_CASE("report comparison", "[metrics]") {
    const MetricsReport a = compute_metrics(open_loop(0.05));
    for (const auto& d : compare_reports(a, a)) {
        CHECK(d.abs_diff == 0.0);
        CHECK(d.rel_diff == 0.0);
        CHECK_FALSE(d.flagged);
    }

    const MetricsReport target = slope_targets(60.0, 20.0);
    MetricsReport m = target;
    m.didt_s = 58.5;
    auto deltas = compare_reports(m, target);
    CHECK(deltas[0].field == "didt_s");
    CHECK(deltas[0].rel_diff == Approx(-0.025));
    CHECK_FALSE(deltas[0].flagged);

    m.didt_s = 76.6;
    deltas = compare_reports(m, target);
    CHECK(deltas[0].rel_diff == Approx(0.27667).epsilon(1e-4));
    CHECK(deltas[0].flagged);
    for (const auto& d : deltas) {
        if (!d.slope_field) CHECK_FALSE(d.flagged);
    }

    std::ostringstream csv;
    write_delta_csv(deltas, csv);
    CHECK(csv.str().rfind("field,", 0) == 0);
}
