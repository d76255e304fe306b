#pragma once

// Uniformly sampled welding record and its CSV form:
//   t_s,I_W_A,U_arc_V,E_W_V,phase      (phase is SC or EA)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace gmaw {

enum class Phase : std::uint8_t { ShortCircuit, ElectricArc };

[[nodiscard]] constexpr std::string_view phase_label(Phase p) {
    return p == Phase::ShortCircuit ? "SC" : "EA";
}

[[nodiscard]] constexpr Phase other_phase(Phase p) {
    return p == Phase::ShortCircuit ? Phase::ElectricArc : Phase::ShortCircuit;
}

/// Parses "SC"/"EA" (case-insensitive, also "sc"/"ea"); throws DataShapeError.
Phase parse_phase(std::string_view label);

struct Waveform {
    std::vector<double> t;
    std::vector<double> I_W;
    std::vector<double> U_arc;
    std::vector<double> E_W;
    std::vector<Phase> phase;

    [[nodiscard]] std::size_t size() const { return t.size(); }
    [[nodiscard]] bool empty() const { return t.empty(); }
    /// Sampling step, t[1] - t[0]; requires at least two samples.
    [[nodiscard]] double dt() const;

    void reserve(std::size_t n);
    void push_back(double time, double current, double arc_voltage, double source_voltage, Phase ph);

    /// Throws DataShapeError unless columns have equal length and t is uniform and increasing.
    void validate() const;
};

/// Contiguous run of samples [begin, end) sharing one phase label.
struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    Phase phase = Phase::ElectricArc;
    /// False when the run touches either end of the record.
    bool complete = false;

    [[nodiscard]] std::size_t size() const { return end - begin; }
};

/// Runs of identical phase labels.
std::vector<Segment> label_runs(const Waveform& w);

void write_csv(const Waveform& w, std::ostream& out);
void write_csv(const Waveform& w, const std::filesystem::path& path);
/// Reads the CSV schema. A ';'-separated file may use decimal commas.
Waveform read_csv(std::istream& in);
Waveform read_csv(const std::filesystem::path& path);

}  // namespace gmaw
