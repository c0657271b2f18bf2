#pragma once

// Parametric sum-of-Gaussians ECG rhythms for the eight classes, with
// ground-truth intervals marking each class's defining segments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgsal/signal_io.hpp"

namespace ecgsal::synth {

/// Version of the default parameter table returned by `default_spec`.
inline constexpr int kSpecTableVersion = 1;

enum class Wave { P, Q, R, S, T };

/// Gaussian bump; offset and width (standard deviation) in seconds relative to the R peak.
struct Bump {
    Wave wave;
    double amplitude;
    double offset;
    double width;
};

struct BeatTemplate {
    std::vector<Bump> components;

    /// Extent of the template covering +-3 widths of every bump, in seconds.
    double support() const;
    /// Earliest bump edge (offset - 3 width) relative to R; <= 0 for real beats.
    double onset() const;
    void validate() const;
};

BeatTemplate normal_template();

/// One interval [start, end) in samples.
struct Interval {
    std::size_t start = 0;
    std::size_t end = 0;

    bool contains(std::size_t t) const { return t >= start && t < end; }
    bool operator==(const Interval&) const = default;
};

struct GroundTruth {
    std::vector<Interval> intervals;
};

enum class TruthKind {
    none,          // N: no anomaly
    ectopic_beat,  // PVC, PAC: the premature beat
    fibrillation,  // AFIB: inter-QRS stretches
    whole_record,  // SVTA, SBR: rate-defined
    qrs,           // LBBB, RBBB: altered QRS of every beat
};

struct RhythmSpec {
    io::RhythmClass label = io::RhythmClass::N;
    double rate_bpm = 75.0;
    double rate_jitter = 0.03;  // standard deviation of RR, as a fraction of the mean
    BeatTemplate beat = normal_template();

    std::optional<BeatTemplate> ectopic;
    double ectopic_probability = 0.0;
    double ectopic_prematurity = 0.6;  // coupling interval, fraction of RR
    double post_ectopic_interval = 1.4;  // interval to the following beat, fraction of RR
    std::vector<std::size_t> forced_ectopic;  // beat indices that are always ectopic

    double fibrillation_amplitude = 0.0;  // mV, per sinusoidal component
    double noise_sigma = 0.02;           // mV
    double wander_amplitude = 0.05;      // mV
    double amplitude_jitter = 0.15;      // record gain drawn from 1 +- this

    TruthKind truth = TruthKind::none;
    double truth_before = 0.0;  // interval extent around R, seconds
    double truth_after = 0.0;

    void validate() const;
};

/// Versioned default parameterisation for each class.
RhythmSpec default_spec(io::RhythmClass label);

/// One beat over a single RR interval: the R peak sits at sample
/// round(-onset * fs) and the segment is round(rr * fs) samples long.
std::vector<double> synth_beat(const BeatTemplate& beat, double fs, double rr);

struct SynthRecord {
    io::EcgRecord record;
    GroundTruth truth;
};

/// Beats from t = 0 with an annotation at each R peak. Generation is at 360 Hz.
SynthRecord generate_record(const RhythmSpec& spec, double duration_s, std::uint64_t seed,
                            const std::string& name = "synthetic");

/// Ground-truth intervals clipped to a window centred at `center`, in window coordinates.
std::vector<Interval> window_truth(const GroundTruth& truth, std::size_t center);

struct SynthDataset {
    std::vector<SynthRecord> records;
    std::vector<io::Window> windows;                  // class-major, `per_class` per class
    std::vector<std::vector<Interval>> window_truths;  // parallel to `windows`
};

/// Generates records of every class until `per_class` windows carrying that
/// class label have been extracted.
SynthDataset generate_dataset(std::size_t per_class, std::uint64_t seed, double record_seconds = 20.0);

/// Rows "window,start,end", one per interval, keyed by Window::id().
void write_truth_csv(const std::filesystem::path& path, std::span<const io::Window> windows,
                     std::span<const std::vector<Interval>> truths);
std::map<std::string, std::vector<Interval>> read_truth_csv(const std::filesystem::path& path);

}  // namespace ecgsal::synth
