// End-to-end runs of the gmaw executable.
#include "gmaw/kv_config.hpp"
#include "gmaw/waveform.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using Catch::Approx;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name) {
    static const fs::path root = [] {
        std::random_device rd;
        fs::path p = fs::temp_directory_path() / ("gmaw_cli_" + std::to_string(rd()));
        fs::create_directories(p);
        return p;
    }();
    return root / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Run run_gmaw(const std::string& args) {
    static int counter = 0;
    const fs::path o = scratch("stdout_" + std::to_string(counter));
    const fs::path e = scratch("stderr_" + std::to_string(counter++));
    const std::string cmd = std::string("\"") + GMAW_EXE + "\" " + args + " >\"" + o.string() + "\" 2>\"" + e.string() + "\"";
    const int raw = std::system(cmd.c_str());
    Run r;
#ifdef WIFEXITED
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
#else
    r.code = raw;
#endif
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string fixture(const std::string& name) { return (fs::path(GMAW_FIXTURES) / name).string(); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("help and usage errors", "[cli]") {
    CHECK(run_gmaw("--help").code == 0);
    const Run none = run_gmaw("simulate --params " + fixture("table1.params"));
    CHECK(none.code == 2);
    CHECK(none.err.rfind("error[E_VALIDATION]:", 0) == 0);
    const Run zero = run_gmaw("simulate --params " + fixture("table1.params") + " --duration 0 --out " + q(scratch("zero")));
    CHECK(zero.code == 2);
    CHECK(zero.err.rfind("error[E_VALIDATION]:", 0) == 0);
    CHECK(std::count(zero.err.begin(), zero.err.end(), '\n') == 1);
    CHECK(run_gmaw("simulate --mode closed --params " + fixture("table1.params") + " --out " + q(scratch("nogains"))).code == 2);
}

TEST_CASE("open-loop simulate writes the record set", "[cli]") {
    const fs::path dir = scratch("open");
    const Run r = run_gmaw("simulate --mode open --params " + fixture("table1.params") + " --duration 0.05 --out " + q(dir));
    REQUIRE(r.code == 0);
    for (const char* f : {"waveform.csv", "switches.csv", "summary.txt", "manifest.txt"}) CHECK(fs::exists(dir / f));
    const gmaw::Waveform w = gmaw::read_csv(dir / "waveform.csv");
    CHECK(w.size() == 50000);
    CHECK(slurp(dir / "waveform.csv").rfind("t_s,I_W_A,U_arc_V,E_W_V,phase\n", 0) == 0);
}

TEST_CASE("closed-loop simulate then metrics", "[cli]") {
    const fs::path sim = scratch("closed");
    REQUIRE(run_gmaw("simulate --mode closed --params " + fixture("table1.params") + " --gains " + fixture("table2.gains") +
                 " --duration 0.1 --out " + q(sim))
                .code == 0);
    CHECK(fs::exists(sim / "detections.csv"));
    const fs::path met = scratch("closed_metrics");
    const Run r = run_gmaw("metrics --input " + q(sim / "waveform.csv") + " --out " + q(met));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("didt_s=") != std::string::npos);
    const std::string csv = slurp(met / "metrics.csv");
    CHECK(csv.find("didt_s") != std::string::npos);
    CHECK(fs::exists(met / "targets.csv"));
}

TEST_CASE("identify round trip", "[cli]") {
    const fs::path sim = scratch("id_sim");
    REQUIRE(run_gmaw("simulate --params " + fixture("table1.params") + " --duration 0.05 --out " + q(sim)).code == 0);
    const fs::path init = scratch("start.params");
    std::ofstream(init) << "R_sum = 0.176\nE_ac = 22\nR_1 = 0.015\nR_2 = 0.007\nC = 2.6\n";
    const fs::path out = scratch("id_out");
    const Run r = run_gmaw("identify --input " + q(sim / "waveform.csv") + " --params " + fixture("table1.params") +
                       " --init " + q(init) + " --out " + q(out));
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto ea = gmaw::KeyValueConfig::load(out / "fit_ea.txt");
    CHECK(ea.number("R_sum") == Approx(0.088).epsilon(1e-3));
    CHECK(ea.number("E_ac") == Approx(11.0).epsilon(1e-3));
    CHECK(ea.text("converged") == "true");
    const auto sc = gmaw::KeyValueConfig::load(out / "fit_sc.txt");
    CHECK(sc.number("R_1") == Approx(0.010).epsilon(1e-3));
    CHECK(sc.number("R_2") == Approx(0.010).epsilon(1e-3));
    CHECK(sc.number("C") == Approx(2.0).epsilon(1e-3));
    const auto ident = gmaw::KeyValueConfig::load(out / "identified.params");
    CHECK(ident.number("t_cc") == Approx(2.5e-3).epsilon(1e-2));
    CHECK(fs::exists(out / "residual_sc.csv"));
    CHECK(fs::exists(out / "segments.csv"));
}

TEST_CASE("identify a record without short circuits", "[cli]") {
    const fs::path csv = scratch("arc_only.csv");
    {
        std::ofstream f(csv);
        f << "t_s,I_W_A,U_arc_V,E_W_V,phase\n";
        for (int k = 0; k < 3000; ++k) f << k * 1e-6 << ",97.1,16.9,21.1,EA\n";
    }
    const Run r = run_gmaw("identify --input " + q(csv) + " --phase sc --params " + fixture("table1.params") + " --out " +
                       q(scratch("arc_only_out")));
    CHECK(r.code == 4);
    CHECK(r.err.rfind("error[E_DATA_SHAPE]:", 0) == 0);
}

TEST_CASE("noisy arc-phase identification", "[cli]") {
    const fs::path sim = scratch("noisy");
    REQUIRE(run_gmaw("simulate --params " + fixture("table1.params") +
                 " --duration 0.1 --noise-i 2 --noise-v 0.2 --seed 11 --stride 10 --out " + q(sim))
                .code == 0);
    const fs::path out = scratch("noisy_out");
    const Run r = run_gmaw("identify --input " + q(sim / "waveform.csv") + " --phase ea --params " +
                       fixture("table1.params") + " --out " + q(out));
    REQUIRE(r.code == 0);
    const auto ea = gmaw::KeyValueConfig::load(out / "fit_ea.txt");
    CHECK(ea.number("J_N") == Approx(4.0).epsilon(0.2));
    CHECK(ea.number("R_sum") == Approx(0.088).epsilon(0.05));
}

TEST_CASE("verify-tuning", "[cli]") {
    const std::string base = "verify-tuning --params " + fixture("table1.params") + " --gains ";
    const Run t2 = run_gmaw(base + fixture("table2.gains") + " --out " + q(scratch("vt2")));
    REQUIRE(t2.code == 0);
    CHECK(t2.out.find("overall: PASS") != std::string::npos);
    for (const char* f : {"tuning.txt", "tuning.csv", "locus_sc.csv", "locus_ea.csv", "manifest.txt"})
        CHECK(fs::exists(scratch("vt2") / f));
    CHECK(slurp(scratch("vt2") / "locus_sc.csv").rfind("K_p,branch,re,im,stable\n", 0) == 0);

    const Run t3 = run_gmaw(base + fixture("table3.gains") + " --band 0.1 --out " + q(scratch("vt3")));
    CHECK(t3.out.find("overall: PASS") != std::string::npos);

    const Run hot = run_gmaw(base + fixture("table2.gains") + " --gain-scale 100 --out " + q(scratch("vthot")));
    CHECK(hot.code == 0);
    CHECK(hot.out.find("overall: FAIL") != std::string::npos);

    CHECK(run_gmaw(base + fixture("table2.gains") + " --band 0 --out " + q(scratch("vtbad"))).code == 2);
}

TEST_CASE("metrics comparison of two records", "[cli]") {
    const fs::path open = scratch("cmp_open");
    const fs::path closed = scratch("cmp_closed");
    REQUIRE(run_gmaw("simulate --params " + fixture("table1.params") + " --duration 0.1 --out " + q(open)).code == 0);
    REQUIRE(run_gmaw("simulate --mode closed --params " + fixture("table1.params") + " --gains " + fixture("table2.gains") +
                 " --duration 0.1 --out " + q(closed))
                .code == 0);

    const fs::path same = scratch("cmp_same");
    REQUIRE(run_gmaw("metrics --input " + q(open / "waveform.csv") + " --input " + q(open / "waveform.csv") + " --out " +
                 q(same))
                .code == 0);
    std::istringstream rows(slurp(same / "comparison.csv"));
    std::string line;
    std::getline(rows, line);
    int n = 0;
    while (std::getline(rows, line)) {
        ++n;
        CHECK(line.substr(line.size() - 2) == ",0");
    }
    CHECK(n > 0);

    const fs::path diff = scratch("cmp_diff");
    REQUIRE(run_gmaw("metrics --input " + q(closed / "waveform.csv") + " --input " + q(open / "waveform.csv") + " --out " +
                 q(diff))
                .code == 0);
    const std::string cmp = slurp(diff / "comparison.csv");
    CHECK(cmp.find(",didt_s,") != std::string::npos);
    CHECK(cmp.find(",1\n") != std::string::npos);
}

TEST_CASE("replay reproduces a run byte for byte", "[cli]") {
    const fs::path first = scratch("rep_a");
    REQUIRE(run_gmaw("simulate --params " + fixture("table1.params") +
                 " --duration 0.03 --noise-i 1 --jitter 0.1 --seed 42 --out " + q(first))
                .code == 0);
    const fs::path second = scratch("rep_b");
    const Run r = run_gmaw("replay --manifest " + q(first / "manifest.txt") + " --out " + q(second));
    REQUIRE(r.code == 0);
    CHECK(slurp(first / "waveform.csv") == slurp(second / "waveform.csv"));
    CHECK(slurp(first / "switches.csv") == slurp(second / "switches.csv"));

    const fs::path third = scratch("rep_c");
    REQUIRE(run_gmaw("simulate --params " + fixture("table1.params") +
                 " --duration 0.03 --noise-i 1 --jitter 0.1 --seed 43 --out " + q(third))
                .code == 0);
    CHECK(slurp(first / "waveform.csv") != slurp(third / "waveform.csv"));
}
