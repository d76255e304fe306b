#include "commands.hpp"

#include "manifest.hpp"

#include "gmaw/analysis.hpp"
#include "gmaw/control.hpp"
#include "gmaw/error.hpp"
#include "gmaw/identification.hpp"
#include "gmaw/kv_config.hpp"
#include "gmaw/metrics.hpp"
#include "gmaw/simulator.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

namespace gmaw::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    return out;
}

fs::path prepare_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--out is required");
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

struct SimulateOpts {
    std::string mode = "open";
    std::string params;
    std::string gains;
    double ew = 21.1;
    double duration = 0.1;
    double dt = 1e-6;
    double noise_i = 0.0;
    double noise_v = 0.0;
    double jitter = 0.0;
    std::uint64_t seed = 0;
    std::size_t stride = 1;
    std::string out;
};

struct IdentifyOpts {
    std::string input;
    std::string phase = "both";
    std::string params;
    std::string init;
    std::string labels = "detect";
    SegmentationConfig seg;
    int max_iterations = 500;
    std::string out;
};

struct VerifyOpts {
    std::string params;
    std::string gains;
    double band = 0.05;
    double gain_scale = 1.0;
    double sweep_min = 0.1;
    double sweep_max = 10.0;
    int sweep_points = 41;
    std::string out;
};

struct MetricsOpts {
    std::vector<std::string> inputs;
    bool relabel = false;
    double target_sc = 60.0;
    double target_ea = 20.0;
    std::string out;
};

struct ReplayOpts {
    std::string manifest;
    std::string out;
};

void write_switches(const SimulationTrace& trace, std::ostream& out) {
    out << "t_s,to,i_L_before_A,i_L_after_A\n";
    for (const auto& s : trace.switches) {
        out << format_number(s.time) << ',' << phase_label(s.to) << ',' << format_number(s.i_L_before) << ','
            << format_number(s.i_L_after) << '\n';
    }
}

int cmd_simulate(const SimulateOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    if (o.mode != "open" && o.mode != "closed") throw ValidationError("--mode must be open or closed");
    if (o.mode == "closed" && o.gains.empty()) throw ValidationError("closed-loop simulation needs --gains");
    const PlantConfig plant = load_plant_config(o.params);
    SimConfig cfg;
    cfg.dt_sim = o.dt;
    cfg.duration = o.duration;
    cfg.noise_std_I = o.noise_i;
    cfg.noise_std_V = o.noise_v;
    cfg.jitter = o.jitter;
    cfg.seed = o.seed;
    cfg.record_stride = o.stride;
    cfg.validate();

    RunManifest manifest{.command = "simulate", .args = args, .seed = o.seed, .output_dir = o.out, .inputs = {}};
    manifest.add_input(o.params);
    if (o.mode == "closed") manifest.add_input(o.gains);
    const fs::path dir = prepare_dir(o.out);

    SimulationTrace trace;
    Waveform w;
    std::vector<DetectionEvent> events;
    if (o.mode == "open") {
        w = run_open_loop(plant.circuit, cfg, o.ew, &trace);
    } else {
        const ControllerSettings settings = load_controller_settings(o.gains);
        w = simulate_switched_pid(plant.circuit, plant.actuator, cfg, settings, &events, &trace);
    }
    write_csv(w, dir / "waveform.csv");
    {
        auto f = open_out(dir / "switches.csv");
        write_switches(trace, f);
    }
    if (o.mode == "closed") {
        auto f = open_out(dir / "detections.csv");
        f << "t_s,to\n";
        for (const auto& e : events) f << format_number(e.time) << ',' << phase_label(e.to) << '\n';
    }
    {
        auto f = open_out(dir / "summary.txt");
        f << "mode = " << o.mode << "\nsamples = " << w.size() << "\nplant_switches = " << trace.switches.size() << '\n';
        if (o.mode == "closed") f << "detected_switches = " << events.size() << '\n';
        try {
            const MetricsReport m = compute_metrics(w);
            f << "\n";
            write_report_table(m, f);
        } catch (const InsufficientCycles& e) {
            f << "metrics: " << e.what() << '\n';
        }
    }
    manifest.write(dir);
    out << "simulate: " << w.size() << " samples, " << trace.switches.size() << " phase switches -> "
        << (dir / "waveform.csv").string() << '\n';
    return 0;
}

std::vector<double> initial_theta(Phase phase, const CircuitParams& base, const KeyValueConfig* init) {
    std::vector<double> th = phase == Phase::ShortCircuit ? to_vector(theta_sc_of(base)) : to_vector(theta_ea_of(base));
    if (init) {
        const auto names = theta_names(phase);
        for (std::size_t i = 0; i < names.size(); ++i) th[i] = init->number_or(names[i], th[i]);
    }
    return th;
}

int cmd_identify(const IdentifyOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    if (o.phase != "sc" && o.phase != "ea" && o.phase != "both") throw ValidationError("--phase must be sc, ea or both");
    if (o.labels != "detect" && o.labels != "recorded") throw ValidationError("--labels must be detect or recorded");
    const PlantConfig plant = load_plant_config(o.params);
    KeyValueConfig init;
    if (!o.init.empty()) init = KeyValueConfig::load(o.init);

    RunManifest manifest{.command = "identify", .args = args, .seed = 0, .output_dir = o.out, .inputs = {}};
    manifest.add_input(o.input);
    manifest.add_input(o.params);
    if (!o.init.empty()) manifest.add_input(o.init);

    const Waveform w = read_csv(fs::path(o.input));
    const std::vector<Segment> segs = o.labels == "detect" ? segment(w, o.seg) : label_runs(w);
    std::vector<Phase> phases;
    if (o.phase != "ea") phases.push_back(Phase::ShortCircuit);
    if (o.phase != "sc") phases.push_back(Phase::ElectricArc);

    FitOptions fopt;
    fopt.max_iterations = o.max_iterations;
    const KnownParams known = known_of(plant.circuit);
    std::vector<FitReport> reports;
    for (Phase ph : phases) {
        reports.push_back(fit(w, segs, ph, initial_theta(ph, plant.circuit, o.init.empty() ? nullptr : &init), known, fopt));
    }

    const fs::path dir = prepare_dir(o.out);
    {
        auto f = open_out(dir / "segments.csv");
        f << "begin,end,t_begin_s,t_end_s,phase,complete\n";
        for (const auto& s : segs) {
            f << s.begin << ',' << s.end << ',' << format_number(w.t[s.begin]) << ',' << format_number(w.t[s.end - 1])
              << ',' << phase_label(s.phase) << ',' << (s.complete ? 1 : 0) << '\n';
        }
    }
    PlantConfig identified = plant;
    bool all_converged = true;
    for (const auto& rep : reports) {
        const std::string tag = rep.phase == Phase::ShortCircuit ? "sc" : "ea";
        auto f = open_out(dir / ("fit_" + tag + ".txt"));
        write_fit_report(rep, f);
        auto r = open_out(dir / ("residual_" + tag + ".csv"));
        write_residual_csv(w, segs, rep, known, r);
        identified.circuit = apply_fit(identified.circuit, rep);
        all_converged = all_converged && rep.converged;
        out << "identify " << phase_label(rep.phase) << ":";
        for (std::size_t i = 0; i < rep.names.size(); ++i) out << ' ' << rep.names[i] << '=' << format_number(rep.theta_hat[i]);
        out << " J_N=" << format_number(rep.J_N) << " iterations=" << rep.iterations
            << (rep.converged ? "" : " (not converged)") << '\n';
    }
    const PhaseDurations durations = estimate_durations(segs, w.dt());
    if (durations.t_cc > 0.0) identified.circuit.t_cc = durations.t_cc;
    if (durations.t_ae > 0.0) identified.circuit.t_ae = durations.t_ae;
    {
        auto f = open_out(dir / "identified.params");
        f << to_config(identified).to_string();
    }
    manifest.write(dir);
    if (!all_converged) throw Error(ErrorCode::Convergence, "identification did not converge");
    return 0;
}

int cmd_verify(const VerifyOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    if (!(o.gain_scale > 0.0)) throw ValidationError("--gain-scale must be positive");
    const PlantConfig plant = load_plant_config(o.params);
    ControllerSettings settings = load_controller_settings(o.gains);
    settings.gains.sc.K_p *= o.gain_scale;
    settings.gains.ea.K_p *= o.gain_scale;
    SettlingSpec spec;
    spec.band = o.band;
    spec.validate();

    RunManifest manifest{.command = "verify-tuning", .args = args, .seed = 0, .output_dir = o.out, .inputs = {}};
    manifest.add_input(o.params);
    manifest.add_input(o.gains);

    const TuningReport rep = verify_tuning(plant.circuit, plant.actuator, settings, spec);
    const auto locus_sc = gain_sweep(sc_transfer(plant.circuit), settings.gains.sc, o.sweep_min, o.sweep_max, o.sweep_points);
    const auto locus_ea = gain_sweep(ea_transfer(plant.circuit), settings.gains.ea, o.sweep_min, o.sweep_max, o.sweep_points);

    const fs::path dir = prepare_dir(o.out);
    {
        auto f = open_out(dir / "tuning.txt");
        write_tuning_report(rep, f);
    }
    {
        auto f = open_out(dir / "tuning.csv");
        write_tuning_csv(rep, f);
    }
    {
        auto f = open_out(dir / "locus_sc.csv");
        write_locus_csv(locus_sc, f);
    }
    {
        auto f = open_out(dir / "locus_ea.csv");
        write_locus_csv(locus_ea, f);
    }
    manifest.write(dir);
    write_tuning_report(rep, out);
    out << "\noverall: " << (rep.all_pass() ? "PASS" : "FAIL") << '\n';
    return 0;
}

int cmd_metrics(const MetricsOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    if (o.inputs.empty()) throw ValidationError("metrics needs at least one --input");
    RunManifest manifest{.command = "metrics", .args = args, .seed = 0, .output_dir = o.out, .inputs = {}};
    for (const auto& in : o.inputs) manifest.add_input(in);

    // One worker per file; each pipeline is sequential.
    std::vector<std::future<MetricsReport>> jobs;
    for (const auto& in : o.inputs) {
        jobs.push_back(std::async(std::launch::async, [path = in, relabel = o.relabel] {
            const Waveform w = read_csv(fs::path(path));
            try {
                return relabel ? compute_metrics(w, segment(w)) : compute_metrics(w);
            } catch (const Error& e) {
                throw Error(e.code(), path + ": " + e.what());
            }
        }));
    }
    std::vector<std::pair<std::string, MetricsReport>> reports;
    for (std::size_t i = 0; i < jobs.size(); ++i) reports.emplace_back(o.inputs[i], jobs[i].get());

    const fs::path dir = prepare_dir(o.out);
    const MetricsReport targets = slope_targets(o.target_sc, o.target_ea);
    {
        auto txt = open_out(dir / "metrics.txt");
        for (const auto& [name, rep] : reports) {
            txt << "# " << name << '\n';
            write_report_table(rep, txt);
            txt << "\nslopes against targets " << format_number(o.target_sc) << " / " << format_number(o.target_ea)
                << " A/ms\n";
            auto d = compare_reports(rep, targets);
            d.resize(2);
            write_delta_table(d, txt);
            txt << '\n';
        }
    }
    {
        auto csv = open_out(dir / "metrics.csv");
        write_report_csv(reports, csv);
    }
    {
        auto csv = open_out(dir / "targets.csv");
        csv << "source,";
        bool header = true;
        for (const auto& [name, rep] : reports) {
            auto d = compare_reports(rep, targets);
            d.resize(2);
            std::ostringstream body;
            write_delta_csv(d, body);
            std::string text = body.str();
            const auto nl = text.find('\n');
            if (header) {
                csv << text.substr(0, nl + 1);
                header = false;
            }
            std::istringstream lines(text.substr(nl + 1));
            for (std::string line; std::getline(lines, line);) csv << name << ',' << line << '\n';
        }
    }
    if (reports.size() >= 2) {
        auto txt = open_out(dir / "comparison.txt");
        auto csv = open_out(dir / "comparison.csv");
        csv << "a,b,field,a_value,b_value,abs_diff,rel_diff,flagged\n";
        for (std::size_t i = 1; i < reports.size(); ++i) {
            const auto d = compare_reports(reports[i].second, reports[0].second);
            txt << "# a = " << reports[i].first << "\n# b = " << reports[0].first << '\n';
            write_delta_table(d, txt);
            txt << '\n';
            for (const auto& row : d) {
                csv << reports[i].first << ',' << reports[0].first << ',' << row.field << ',' << format_number(row.a) << ','
                    << format_number(row.b) << ',' << format_number(row.abs_diff) << ',' << format_number(row.rel_diff)
                    << ',' << (row.flagged ? 1 : 0) << '\n';
            }
        }
    }
    manifest.write(dir);
    for (const auto& [name, rep] : reports) {
        out << name << ": didt_s=" << format_fixed(rep.didt_s, 3) << " A/ms didt_d=" << format_fixed(rep.didt_d, 3)
            << " A/ms cycles=" << rep.cycle_count << '\n';
    }
    return 0;
}

std::string one_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return msg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Simulation, identification, tuning verification and metrics for GMAW current control", "gmaw"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    SimulateOpts sim;
    auto* s = app.add_subcommand("simulate", "Simulate the switched plant in open or closed loop");
    s->add_option("--mode", sim.mode, "open or closed")->capture_default_str();
    s->add_option("--params", sim.params, "circuit parameter file")->required()->check(CLI::ExistingFile);
    s->add_option("--gains", sim.gains, "controller gains file (closed loop)")->check(CLI::ExistingFile);
    s->add_option("--ew", sim.ew, "constant source voltage for open loop [V]")->capture_default_str();
    s->add_option("--duration", sim.duration, "simulated time [s]")->capture_default_str();
    s->add_option("--dt", sim.dt, "integration step [s]")->capture_default_str();
    s->add_option("--noise-i", sim.noise_i, "current measurement noise std [A]");
    s->add_option("--noise-v", sim.noise_v, "voltage measurement noise std [V]");
    s->add_option("--jitter", sim.jitter, "relative std of phase durations");
    s->add_option("--seed", sim.seed, "random seed");
    s->add_option("--stride", sim.stride, "record every n-th step");
    s->add_option("--out", sim.out, "output directory")->required();

    IdentifyOpts idf;
    auto* i = app.add_subcommand("identify", "Fit the phase models to a recorded waveform");
    i->add_option("--input", idf.input, "waveform CSV")->required()->check(CLI::ExistingFile);
    i->add_option("--phase", idf.phase, "sc, ea or both")->capture_default_str();
    i->add_option("--params", idf.params, "parameter file: known L, R_L and initial guess")->required()->check(CLI::ExistingFile);
    i->add_option("--init", idf.init, "initial guess overrides (R_1, R_2, C, R_sum, E_ac)")->check(CLI::ExistingFile);
    i->add_option("--labels", idf.labels, "detect (segment from I/U) or recorded (phase column)")->capture_default_str();
    i->add_option("--v-threshold", idf.seg.v_threshold, "segmentation voltage threshold [V]")->capture_default_str();
    i->add_option("--slope-threshold", idf.seg.slope_threshold, "segmentation slope threshold [A/s]")->capture_default_str();
    i->add_option("--slope-window", idf.seg.slope_window, "segmentation slope window [s]")->capture_default_str();
    i->add_option("--max-iterations", idf.max_iterations, "optimizer iteration cap")->capture_default_str();
    i->add_option("--out", idf.out, "output directory")->required();

    VerifyOpts ver;
    auto* v = app.add_subcommand("verify-tuning", "Check the controller against the ramp and settling specifications");
    v->add_option("--params", ver.params, "circuit parameter file")->required()->check(CLI::ExistingFile);
    v->add_option("--gains", ver.gains, "controller gains file")->required()->check(CLI::ExistingFile);
    v->add_option("--band", ver.band, "settling band fraction")->capture_default_str();
    v->add_option("--gain-scale", ver.gain_scale, "multiply both K_p by this factor")->capture_default_str();
    v->add_option("--sweep-min", ver.sweep_min, "root-locus sweep lowest K_p")->capture_default_str();
    v->add_option("--sweep-max", ver.sweep_max, "root-locus sweep highest K_p")->capture_default_str();
    v->add_option("--sweep-points", ver.sweep_points, "root-locus sweep points")->capture_default_str();
    v->add_option("--out", ver.out, "output directory")->required();

    MetricsOpts met;
    auto* m = app.add_subcommand("metrics", "Compute welding performance measures");
    m->add_option("--input", met.inputs, "waveform CSV (repeatable)")->required()->check(CLI::ExistingFile);
    m->add_flag("--relabel", met.relabel, "derive phases from I/U instead of the phase column");
    m->add_option("--target-sc", met.target_sc, "SC slope target [A/ms]")->capture_default_str();
    m->add_option("--target-ea", met.target_ea, "EA slope magnitude target [A/ms]")->capture_default_str();
    m->add_option("--out", met.out, "output directory")->required();

    ReplayOpts rep;
    auto* r = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    r->add_option("--manifest", rep.manifest, "manifest.txt of a previous run")->required()->check(CLI::ExistingFile);
    r->add_option("--out", rep.out, "output directory (default: the recorded one)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (s->parsed()) return cmd_simulate(sim, args, out);
        if (i->parsed()) return cmd_identify(idf, args, out);
        if (v->parsed()) return cmd_verify(ver, args, out);
        if (m->parsed()) return cmd_metrics(met, args, out);
        if (r->parsed()) {
            const RunManifest man = RunManifest::load(rep.manifest);
            if (man.command == "replay") throw ValidationError("manifest records a replay");
            for (const auto& [path, digest] : man.inputs) {
                if (sha256_file(path) != digest) throw ValidationError("input changed since the recorded run: " + path);
            }
            std::vector<std::string> again = man.args;
            if (!rep.out.empty()) {
                auto it = std::find(again.begin(), again.end(), "--out");
                if (it == again.end() || it + 1 == again.end()) throw ValidationError("manifest has no --out argument");
                *(it + 1) = rep.out;
            }
            return run_cli(again, out, err);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << "error[" << error_tag(ErrorCode::Validation) << "]: " << one_line(e.what()) << '\n';
        return static_cast<int>(ErrorCode::Validation);
    } catch (const Error& e) {
        err << "error[" << error_tag(e.code()) << "]: " << one_line(e.what()) << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        err << "error[E_INTERNAL]: " << one_line(e.what()) << '\n';
        return 1;
    }
}

}  // namespace gmaw::cli
