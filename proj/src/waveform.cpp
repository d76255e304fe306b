#include "gmaw/waveform.hpp"

#include "gmaw/error.hpp"
#include "gmaw/kv_config.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace gmaw {

namespace {

constexpr std::string_view kHeader = "t_s,I_W_A,U_arc_V,E_W_V,phase";

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(sep, pos);
        fields.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return fields;
}

std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

}  // namespace

Phase parse_phase(std::string_view label) {
    label = strip(label);
    if (label == "SC" || label == "sc") return Phase::ShortCircuit;
    if (label == "EA" || label == "ea") return Phase::ElectricArc;
    throw DataShapeError("unknown phase label '" + std::string(label) + "'");
}

double Waveform::dt() const {
    if (t.size() < 2) throw DataShapeError("waveform needs at least two samples");
    // Averaged over the record: insensitive to rounding of individual stamps.
    return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

void Waveform::reserve(std::size_t n) {
    t.reserve(n);
    I_W.reserve(n);
    U_arc.reserve(n);
    E_W.reserve(n);
    phase.reserve(n);
}

void Waveform::push_back(double time, double current, double arc_voltage, double source_voltage, Phase ph) {
    t.push_back(time);
    I_W.push_back(current);
    U_arc.push_back(arc_voltage);
    E_W.push_back(source_voltage);
    phase.push_back(ph);
}

void Waveform::validate() const {
    const auto n = t.size();
    if (I_W.size() != n || U_arc.size() != n || E_W.size() != n || phase.size() != n) {
        throw DataShapeError("waveform columns have unequal lengths");
    }
    if (n < 2) return;
    const double step = (t.back() - t.front()) / static_cast<double>(n - 1);
    if (!(step > 0.0)) throw DataShapeError("waveform time must be strictly increasing");
    const double tol = 1e-6 * step + 1e-12 * std::abs(t.back());
    for (std::size_t k = 1; k < n; ++k) {
        const double expected = t[0] + static_cast<double>(k) * step;
        if (std::abs(t[k] - expected) > tol || !(t[k] > t[k - 1])) {
            throw DataShapeError("waveform time is not uniformly sampled at row " + std::to_string(k + 2));
        }
    }
}

std::vector<Segment> label_runs(const Waveform& w) {
    std::vector<Segment> runs;
    const auto n = w.size();
    std::size_t start = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        if (k == n || w.phase[k] != w.phase[start]) {
            if (n > 0) runs.push_back({start, k, w.phase[start], start > 0 && k < n});
            start = k;
        }
    }
    return runs;
}

void write_csv(const Waveform& w, std::ostream& out) {
    out << kHeader << '\n';
    for (std::size_t k = 0; k < w.size(); ++k) {
        out << format_number(w.t[k]) << ',' << format_number(w.I_W[k]) << ',' << format_number(w.U_arc[k])
            << ',' << format_number(w.E_W[k]) << ',' << phase_label(w.phase[k]) << '\n';
    }
}

void write_csv(const Waveform& w, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    write_csv(w, out);
}

Waveform read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataShapeError("empty waveform file");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = strip(line);
    char sep = ',';
    if (header.find(';') != std::string_view::npos) sep = ';';
    const auto names = split(header, sep);
    const auto expected = split(kHeader, ',');
    if (names.size() != expected.size()) throw DataShapeError("waveform header must be '" + std::string(kHeader) + "'");
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (strip(names[i]) != expected[i]) {
            throw DataShapeError("waveform header must be '" + std::string(kHeader) + "'");
        }
    }
    Waveform w;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        const auto content = strip(line);
        if (content.empty()) continue;
        const auto fields = split(content, sep);
        if (fields.size() != 5) {
            throw DataShapeError("row " + std::to_string(row) + ": expected 5 fields, got " +
                                 std::to_string(fields.size()));
        }
        try {
            w.push_back(parse_number(fields[0]), parse_number(fields[1]), parse_number(fields[2]),
                        parse_number(fields[3]), parse_phase(fields[4]));
        } catch (const Error& e) {
            throw DataShapeError("row " + std::to_string(row) + ": " + e.what());
        }
    }
    w.validate();
    return w;
}

Waveform read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataShapeError("cannot open waveform file: " + path.string());
    return read_csv(in);
}

}  // namespace gmaw
