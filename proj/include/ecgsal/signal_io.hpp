#pragma once

// ECG record ingestion: PhysioNet-style headers, format 212/16 signals,
// MIT annotation streams, CSV records, resampling and 2-second windowing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecgsal::io {

enum class RhythmClass : int { N = 0, PVC, PAC, AFIB, SVTA, SBR, LBBB, RBBB };

inline constexpr std::size_t kClassCount = 8;
inline constexpr double kTargetFs = 360.0;
inline constexpr std::size_t kHalfWindow = 360;
inline constexpr std::size_t kWindowLength = 2 * kHalfWindow;

std::string_view class_name(RhythmClass c);
/// Case-insensitive lookup by short name ("N", "PVC", ...).
std::optional<RhythmClass> parse_class(std::string_view name);
inline int class_index(RhythmClass c) { return static_cast<int>(c); }
RhythmClass class_from_index(int index);

enum class FormatCode { f212, f16, csv };

struct SignalSpec {
    std::string file;
    FormatCode format = FormatCode::f212;
    double gain = 200.0;  // ADC units per mV
    int baseline = 0;
    std::string description;
};

struct RecordHeader {
    std::string record_name;
    std::size_t n_signals = 0;
    double fs = 0.0;
    std::size_t n_samples = 0;
    std::vector<SignalSpec> signals;
};

struct BeatAnnotation {
    std::size_t sample_index = 0;
    RhythmClass label = RhythmClass::N;

    bool operator==(const BeatAnnotation&) const = default;
};

struct EcgRecord {
    RecordHeader header;
    std::vector<std::vector<double>> samples;  // per channel, mV
    std::vector<BeatAnnotation> annotations;   // sorted by sample_index
};

struct WindowSource {
    std::string record_name;
    std::size_t center = 0;
};

/// One z-normalised 720-sample segment centred on an annotated R peak.
struct Window {
    std::vector<double> samples;
    RhythmClass label = RhythmClass::N;
    WindowSource source;

    std::string id() const { return source.record_name + ":" + std::to_string(source.center); }
};

// --- headers and binary signals -------------------------------------------

/// Parses "name n_signals fs n_samples" followed by one line per signal:
/// "file format gain[(baseline)][/units] [adcres [adczero ...]] [description]".
/// Comment lines start with '#'. A zero gain means the WFDB default of 200.
RecordHeader parse_header(std::string_view text);

enum class OddTail { reject, accept };

/// Raw interleaved 12-bit samples from format-212 bytes. A trailing 2-byte
/// group (one sample) is accepted only with OddTail::accept.
std::vector<int> unpack_format212(std::span<const std::uint8_t> bytes, OddTail tail = OddTail::reject);

/// Packs interleaved samples (each in [-2048, 2047]); an odd count is
/// zero-padded to a full triplet.
std::vector<std::uint8_t> pack_format212(std::span<const int> samples);

/// De-interleaves and converts to mV: (raw - baseline) / gain. When `n_frames`
/// is given, padding samples beyond it are dropped.
std::vector<std::vector<double>> decode_format212(std::span<const std::uint8_t> bytes, std::size_t n_signals,
                                                  std::span<const double> gain, std::span<const int> baseline,
                                                  std::optional<std::size_t> n_frames = std::nullopt,
                                                  OddTail tail = OddTail::reject);

std::vector<std::vector<double>> decode_format16(std::span<const std::uint8_t> bytes, std::size_t n_signals,
                                                 std::span<const double> gain, std::span<const int> baseline,
                                                 std::optional<std::size_t> n_frames = std::nullopt);

// --- annotations -----------------------------------------------------------

struct AnnotationStream {
    std::vector<BeatAnnotation> beats;
    std::size_t dropped = 0;          // annotations whose code maps to no class
    std::size_t last_sample_index = 0;  // cumulative time of the final annotation of any kind
};

/// MIT annotation stream: 16-bit little-endian words, code = word >> 10,
/// interval = word & 0x3FF. SKIP/NUM/SUB/CHN/AUX pseudo-codes are honoured;
/// rhythm annotations "(AFIB", "(SVTA", "(SBR" relabel subsequent normal beats.
AnnotationStream parse_annotations(std::span<const std::uint8_t> bytes);

/// Class for an MIT beat code while the rhythm annotation `rhythm_aux` (for
/// example "(AFIB"; empty before any rhythm annotation) is in effect.
std::optional<RhythmClass> map_beat_code(int code, std::string_view rhythm_aux);

// --- resampling and windowing ------------------------------------------------

/// Endpoint-aligned linear interpolation to round(n * target_fs / fs) samples.
EcgRecord resample_linear(const EcgRecord& record, double target_fs);

/// In-place z-score; constant input becomes all zeros.
void z_normalize(std::span<double> samples);

/// Channel whose description names lead II, else 0.
std::size_t lead_ii_channel(const RecordHeader& header);

struct WindowExtraction {
    std::vector<Window> windows;
    std::size_t skipped_boundary = 0;
};

/// One window [c - 360, c + 360) per annotation c; record must be at 360 Hz.
WindowExtraction extract_windows(const EcgRecord& record, std::optional<std::size_t> channel = std::nullopt);

struct Split {
    std::vector<Window> train;
    std::vector<Window> test;
};

/// Draws exactly `per_class` windows of every class without replacement into
/// the training set; everything else, in input order, is the test set.
Split balance_classes(std::span<const Window> windows, std::size_t per_class, std::uint64_t seed);

// --- files -----------------------------------------------------------------

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// Loads <stem>.hea plus its signal file and, when present, <stem>.atr.
EcgRecord load_physionet_record(const std::filesystem::path& header_path);

std::vector<double> read_csv_signal(const std::filesystem::path& path);
void write_csv_signal(const std::filesystem::path& path, std::span<const double> samples);
/// Rows "index,label" with label a class name.
std::vector<BeatAnnotation> read_csv_annotations(const std::filesystem::path& path);
void write_csv_annotations(const std::filesystem::path& path, std::span<const BeatAnnotation> beats);

/// Single-channel record from a CSV signal (mV) and optional annotation CSV.
EcgRecord load_csv_record(const std::filesystem::path& signal_path, double fs,
                          const std::optional<std::filesystem::path>& annotation_path = std::nullopt);

/// Windows file: header row, then "record,center,label,v0,...,v719" rows.
void write_windows_csv(const std::filesystem::path& path, std::span<const Window> windows);
std::vector<Window> read_windows_csv(const std::filesystem::path& path);

}  // namespace ecgsal::io
