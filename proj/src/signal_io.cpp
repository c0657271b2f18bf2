#include "ecgsal/signal_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ecgsal/error.hpp"
#include "ecgsal/random.hpp"

namespace ecgsal::io {
namespace {

constexpr std::array<std::string_view, kClassCount> kClassNames = {"N",    "PVC", "PAC",  "AFIB",
                                                                    "SVTA", "SBR", "LBBB", "RBBB"};

// MIT annotation codes used here.
constexpr int kCodeNormal = 1;
constexpr int kCodeLbbb = 2;
constexpr int kCodeRbbb = 3;
constexpr int kCodePvc = 5;
constexpr int kCodeApc = 8;
constexpr int kCodeRhythm = 28;
constexpr int kCodeSkip = 59;
constexpr int kCodeNum = 60;
constexpr int kCodeSub = 61;
constexpr int kCodeChn = 62;
constexpr int kCodeAux = 63;

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream is{std::string(line)};
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

bool parse_double_prefix(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end != s.c_str();
}

bool parse_double_exact(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

bool parse_size(const std::string& s, std::size_t& out) {
    if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) return false;
    char* end = nullptr;
    out = std::strtoull(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

int sign_extend12(int v) { return (v & 0x800) ? v - 0x1000 : v; }

}  // namespace

std::string_view class_name(RhythmClass c) { return kClassNames.at(static_cast<std::size_t>(c)); }

std::optional<RhythmClass> parse_class(std::string_view name) {
    std::string upper;
    for (char ch : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (kClassNames[i] == upper) return static_cast<RhythmClass>(i);
    }
    return std::nullopt;
}

RhythmClass class_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kClassCount)) {
        throw ParseError(0, "class index " + std::to_string(index) + " out of range");
    }
    return static_cast<RhythmClass>(index);
}

RecordHeader parse_header(std::string_view text) {
    RecordHeader h;
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool have_record_line = false;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto tok = split_ws(t);
        if (!have_record_line) {
            if (tok.size() < 4) throw ParseError(line_no, "record line needs 'name n_signals fs n_samples'");
            h.record_name = tok[0].substr(0, tok[0].find('/'));
            if (!parse_size(tok[1], h.n_signals)) throw ParseError(line_no, "bad signal count '" + tok[1] + "'");
            if (h.n_signals < 1) throw ParseError(line_no, "record declares no signals");
            if (!parse_double_prefix(tok[2], h.fs) || !(h.fs > 0.0)) {
                throw ParseError(line_no, "sampling frequency must be positive, got '" + tok[2] + "'");
            }
            if (!parse_size(tok[3], h.n_samples)) throw ParseError(line_no, "bad sample count '" + tok[3] + "'");
            have_record_line = true;
            continue;
        }
        if (h.signals.size() == h.n_signals) break;  // trailing info lines
        if (tok.size() < 2) throw ParseError(line_no, "signal line needs at least 'file format'");
        SignalSpec s;
        s.file = tok[0];
        const std::string fmt = tok[1].substr(0, tok[1].find_first_of("x:+"));
        if (fmt == "212") {
            s.format = FormatCode::f212;
        } else if (fmt == "16") {
            s.format = FormatCode::f16;
        } else if (fmt == "csv") {
            s.format = FormatCode::csv;
        } else {
            throw UnsupportedFormatError("line " + std::to_string(line_no) + ": unsupported signal format '" +
                                         tok[1] + "'");
        }
        bool explicit_baseline = false;
        if (tok.size() > 2) {
            const std::string& g = tok[2];
            double gain = 0.0;
            if (!parse_double_prefix(g, gain) || gain < 0.0) throw ParseError(line_no, "bad gain '" + g + "'");
            s.gain = gain == 0.0 ? 200.0 : gain;
            if (auto open = g.find('('); open != std::string::npos) {
                auto close = g.find(')', open);
                if (close == std::string::npos) throw ParseError(line_no, "unterminated baseline in '" + g + "'");
                double b = 0.0;
                if (!parse_double_exact(g.substr(open + 1, close - open - 1), b)) {
                    throw ParseError(line_no, "bad baseline in '" + g + "'");
                }
                s.baseline = static_cast<int>(b);
                explicit_baseline = true;
            }
        }
        if (tok.size() > 4 && !explicit_baseline) {
            double zero = 0.0;
            if (!parse_double_exact(tok[4], zero)) throw ParseError(line_no, "bad ADC zero '" + tok[4] + "'");
            s.baseline = static_cast<int>(zero);
        }
        for (std::size_t i = 8; i < tok.size(); ++i) s.description += (i > 8 ? " " : "") + tok[i];
        h.signals.push_back(std::move(s));
    }
    if (!have_record_line) throw ParseError(line_no, "empty header");
    if (h.signals.size() != h.n_signals) {
        throw ParseError(line_no, "header declares " + std::to_string(h.n_signals) + " signals but lists " +
                                      std::to_string(h.signals.size()));
    }
    return h;
}

std::vector<int> unpack_format212(std::span<const std::uint8_t> bytes, OddTail tail) {
    const std::size_t rem = bytes.size() % 3;
    if (rem == 1 || (rem == 2 && tail == OddTail::reject)) {
        throw TruncatedInputError("format 212 stream of " + std::to_string(bytes.size()) +
                                  " bytes ends in a partial sample group");
    }
    std::vector<int> out;
    out.reserve(bytes.size() / 3 * 2 + 1);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const int b0 = bytes[i], b1 = bytes[i + 1], b2 = bytes[i + 2];
        out.push_back(sign_extend12(((b1 & 0x0F) << 8) | b0));
        out.push_back(sign_extend12(((b1 >> 4) << 8) | b2));
    }
    if (rem == 2) out.push_back(sign_extend12(((bytes[i + 1] & 0x0F) << 8) | bytes[i]));
    return out;
}

std::vector<std::uint8_t> pack_format212(std::span<const int> samples) {
    std::vector<std::uint8_t> out;
    out.reserve((samples.size() + 1) / 2 * 3);
    for (std::size_t i = 0; i < samples.size(); i += 2) {
        const int s1 = samples[i];
        const int s2 = i + 1 < samples.size() ? samples[i + 1] : 0;
        if (s1 < -2048 || s1 > 2047 || s2 < -2048 || s2 > 2047) {
            throw ContractError("format 212 sample outside 12-bit range");
        }
        out.push_back(static_cast<std::uint8_t>(s1 & 0xFF));
        out.push_back(static_cast<std::uint8_t>(((s1 >> 8) & 0x0F) | (((s2 >> 8) & 0x0F) << 4)));
        out.push_back(static_cast<std::uint8_t>(s2 & 0xFF));
    }
    return out;
}

namespace {

std::vector<std::vector<double>> deinterleave(const std::vector<int>& raw, std::size_t n_signals,
                                              std::span<const double> gain, std::span<const int> baseline,
                                              std::optional<std::size_t> n_frames) {
    if (n_signals == 0 || gain.size() != n_signals || baseline.size() != n_signals) {
        throw ContractError("gain/baseline must have one entry per signal");
    }
    std::size_t frames = raw.size() / n_signals;
    if (n_frames) {
        if (*n_frames > frames) {
            throw TruncatedInputError("signal holds " + std::to_string(frames) + " frames, header declares " +
                                      std::to_string(*n_frames));
        }
        frames = *n_frames;
    }
    std::vector<std::vector<double>> out(n_signals, std::vector<double>(frames));
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t s = 0; s < n_signals; ++s) {
            out[s][f] = (raw[f * n_signals + s] - baseline[s]) / gain[s];
        }
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> decode_format212(std::span<const std::uint8_t> bytes, std::size_t n_signals,
                                                  std::span<const double> gain, std::span<const int> baseline,
                                                  std::optional<std::size_t> n_frames, OddTail tail) {
    return deinterleave(unpack_format212(bytes, tail), n_signals, gain, baseline, n_frames);
}

std::vector<std::vector<double>> decode_format16(std::span<const std::uint8_t> bytes, std::size_t n_signals,
                                                 std::span<const double> gain, std::span<const int> baseline,
                                                 std::optional<std::size_t> n_frames) {
    if (bytes.size() % 2) throw TruncatedInputError("format 16 stream has an odd byte count");
    std::vector<int> raw(bytes.size() / 2);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<std::int16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
    return deinterleave(raw, n_signals, gain, baseline, n_frames);
}

std::optional<RhythmClass> map_beat_code(int code, std::string_view rhythm_aux) {
    switch (code) {
        case kCodeLbbb: return RhythmClass::LBBB;
        case kCodeRbbb: return RhythmClass::RBBB;
        case kCodePvc: return RhythmClass::PVC;
        case kCodeApc: return RhythmClass::PAC;
        case kCodeNormal:
            if (rhythm_aux.empty() || rhythm_aux == "(N") return RhythmClass::N;
            if (rhythm_aux == "(AFIB") return RhythmClass::AFIB;
            if (rhythm_aux == "(SVTA") return RhythmClass::SVTA;
            if (rhythm_aux == "(SBR") return RhythmClass::SBR;
            return std::nullopt;
        default: return std::nullopt;
    }
}

AnnotationStream parse_annotations(std::span<const std::uint8_t> bytes) {
    AnnotationStream out;
    std::size_t i = 0;
    long long time = 0;
    int prev_code = 0;
    std::string rhythm;
    auto need = [&](std::size_t n) {
        if (i + n > bytes.size()) {
            throw UnexpectedEofError("annotation stream ended at byte " + std::to_string(bytes.size()) +
                                     " without a terminator");
        }
    };
    while (true) {
        need(2);
        const unsigned word = bytes[i] | (bytes[i + 1] << 8);
        i += 2;
        const int code = static_cast<int>(word >> 10);
        const unsigned interval = word & 0x3FF;
        if (code == 0 && interval == 0) break;
        if (code == kCodeSkip) {
            need(4);
            const std::uint32_t hi = bytes[i] | (bytes[i + 1] << 8);
            const std::uint32_t lo = bytes[i + 2] | (bytes[i + 3] << 8);
            time += static_cast<std::int32_t>((hi << 16) | lo);
            i += 4;
            continue;
        }
        if (code == kCodeAux) {
            need(interval + (interval & 1));
            std::string aux(reinterpret_cast<const char*>(bytes.data() + i), interval);
            aux.erase(std::find(aux.begin(), aux.end(), '\0'), aux.end());
            if (prev_code == kCodeRhythm) rhythm = aux;
            i += interval + (interval & 1);
            continue;
        }
        if (code == kCodeNum || code == kCodeSub || code == kCodeChn) continue;
        time += interval;
        if (time < 0) throw ParseError(0, "annotation time went negative");
        out.last_sample_index = static_cast<std::size_t>(time);
        prev_code = code;
        if (code == kCodeRhythm) {
            rhythm.clear();  // until its AUX string arrives
            ++out.dropped;
            continue;
        }
        if (auto label = map_beat_code(code, rhythm)) {
            out.beats.push_back({static_cast<std::size_t>(time), *label});
        } else {
            ++out.dropped;
        }
    }
    return out;
}

EcgRecord resample_linear(const EcgRecord& record, double target_fs) {
    if (!(target_fs > 0.0)) throw ContractError("resample_linear: target rate must be positive");
    const double fs = record.header.fs;
    if (target_fs == fs) return record;
    const std::size_t n = record.header.n_samples;
    const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_fs / fs));
    // Endpoint-aligned: output j sits at source position j * (n-1)/(n_out-1).
    const double ratio = (n > 1 && n_out > 1) ? static_cast<double>(n - 1) / static_cast<double>(n_out - 1) : 0.0;

    EcgRecord out;
    out.header = record.header;
    out.header.fs = target_fs;
    out.header.n_samples = n_out;
    out.samples.reserve(record.samples.size());
    for (const auto& ch : record.samples) {
        std::vector<double> r(n_out);
        for (std::size_t j = 0; j < n_out && n > 0; ++j) {
            if (j + 1 == n_out) {
                r[j] = ch[n - 1];
                continue;
            }
            const double p = static_cast<double>(j) * ratio;
            const auto k = static_cast<std::size_t>(p);
            const double frac = p - static_cast<double>(k);
            r[j] = k + 1 < n ? ch[k] + frac * (ch[k + 1] - ch[k]) : ch[k];
        }
        out.samples.push_back(std::move(r));
    }
    for (const auto& a : record.annotations) {
        const double idx = ratio > 0.0 ? static_cast<double>(a.sample_index) / ratio
                                       : static_cast<double>(a.sample_index) * target_fs / fs;
        const auto mapped = static_cast<std::size_t>(std::llround(idx));
        if (mapped < n_out) out.annotations.push_back({mapped, a.label});
    }
    return out;
}

void z_normalize(std::span<double> samples) {
    if (samples.empty()) return;
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(samples.size()));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
        std::fill(samples.begin(), samples.end(), 0.0);
        return;
    }
    for (double& v : samples) v = (v - mean) / sd;
}

std::size_t lead_ii_channel(const RecordHeader& header) {
    for (std::size_t i = 0; i < header.signals.size(); ++i) {
        const auto& d = header.signals[i].description;
        if (d == "MLII" || d == "II" || d == "ECG II" || d == "Lead II") return i;
    }
    return 0;
}

WindowExtraction extract_windows(const EcgRecord& record, std::optional<std::size_t> channel) {
    if (record.header.fs != kTargetFs) {
        throw ContractError("extract_windows: record must be at 360 Hz, got " + std::to_string(record.header.fs));
    }
    const std::size_t ch = channel.value_or(lead_ii_channel(record.header));
    if (ch >= record.samples.size()) throw ContractError("extract_windows: channel out of range");
    const auto& x = record.samples[ch];
    WindowExtraction out;
    for (const auto& a : record.annotations) {
        const std::size_t c = a.sample_index;
        if (c < kHalfWindow || c + kHalfWindow > x.size()) {
            ++out.skipped_boundary;
            continue;
        }
        Window w;
        w.samples.assign(x.begin() + static_cast<long>(c - kHalfWindow), x.begin() + static_cast<long>(c + kHalfWindow));
        z_normalize(w.samples);
        w.label = a.label;
        w.source = {record.header.record_name, c};
        out.windows.push_back(std::move(w));
    }
    return out;
}

Split balance_classes(std::span<const Window> windows, std::size_t per_class, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, kClassCount> by_class;
    for (std::size_t i = 0; i < windows.size(); ++i) by_class[class_index(windows[i].label)].push_back(i);
    for (std::size_t c = 0; c < kClassCount; ++c) {
        if (by_class[c].size() < per_class) {
            throw InsufficientDataError("class " + std::string(class_name(static_cast<RhythmClass>(c))) + " has " +
                                        std::to_string(by_class[c].size()) + " windows, " +
                                        std::to_string(per_class) + " required");
        }
    }
    std::mt19937_64 rng(seed);
    std::vector<char> chosen(windows.size(), 0);
    Split split;
    for (auto& idx : by_class) {
        // Partial Fisher-Yates: the first per_class slots become the sample.
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, idx.size() - i));
            std::swap(idx[i], idx[j]);
            chosen[idx[i]] = 1;
            split.train.push_back(windows[idx[i]]);
        }
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!chosen[i]) split.test.push_back(windows[i]);
    }
    return split;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

EcgRecord load_physionet_record(const std::filesystem::path& header_path) {
    const auto text = read_bytes(header_path);
    EcgRecord rec;
    rec.header = parse_header(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
    const auto dir = header_path.parent_path();
    const auto& sigs = rec.header.signals;
    for (const auto& s : sigs) {
        if (s.file != sigs.front().file || s.format != sigs.front().format) {
            throw UnsupportedFormatError("records with several signal files or mixed formats are not supported");
        }
    }
    std::vector<double> gain;
    std::vector<int> baseline;
    for (const auto& s : sigs) {
        gain.push_back(s.gain);
        baseline.push_back(s.baseline);
    }
    const auto signal_path = dir / sigs.front().file;
    switch (sigs.front().format) {
        case FormatCode::f212:
            rec.samples = decode_format212(read_bytes(signal_path), rec.header.n_signals, gain, baseline,
                                           rec.header.n_samples, OddTail::accept);
            break;
        case FormatCode::f16:
            rec.samples = decode_format16(read_bytes(signal_path), rec.header.n_signals, gain, baseline,
                                          rec.header.n_samples);
            break;
        case FormatCode::csv: {
            if (rec.header.n_signals != 1) throw UnsupportedFormatError("csv signals are single-channel");
            auto x = read_csv_signal(signal_path);
            if (x.size() < rec.header.n_samples) throw TruncatedInputError("csv signal shorter than header");
            x.resize(rec.header.n_samples);
            rec.samples = {std::move(x)};
            break;
        }
    }
    auto atr = header_path;
    atr.replace_extension(".atr");
    if (std::filesystem::exists(atr)) {
        for (const auto& a : parse_annotations(read_bytes(atr)).beats) {
            if (a.sample_index < rec.header.n_samples) rec.annotations.push_back(a);
        }
    }
    return rec;
}

std::vector<double> read_csv_signal(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        double v = 0.0;
        if (!parse_double_exact(t, v)) throw ParseError(line_no, path.string() + ": expected one number, got '" + t + "'");
        out.push_back(v);
    }
    return out;
}

void write_csv_signal(const std::filesystem::path& path, std::span<const double> samples) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[40];
    for (double v : samples) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
}

std::vector<BeatAnnotation> read_csv_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<BeatAnnotation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto comma = t.find(',');
        if (comma == std::string::npos) throw ParseError(line_no, path.string() + ": expected 'index,label'");
        const std::string idx = trim(t.substr(0, comma));
        const std::string lab = trim(t.substr(comma + 1));
        std::size_t index = 0;
        if (!parse_size(idx, index)) {
            if (out.empty() && line_no == 1) continue;  // header row
            throw ParseError(line_no, path.string() + ": bad index '" + idx + "'");
        }
        const auto cls = parse_class(lab);
        if (!cls) throw ParseError(line_no, path.string() + ": unknown class '" + lab + "'");
        out.push_back({index, *cls});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const BeatAnnotation& a, const BeatAnnotation& b) { return a.sample_index < b.sample_index; });
    return out;
}

void write_csv_annotations(const std::filesystem::path& path, std::span<const BeatAnnotation> beats) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "index,label\n";
    for (const auto& b : beats) out << b.sample_index << ',' << class_name(b.label) << '\n';
}

EcgRecord load_csv_record(const std::filesystem::path& signal_path, double fs,
                          const std::optional<std::filesystem::path>& annotation_path) {
    if (!(fs > 0.0)) throw ContractError("load_csv_record: sampling rate must be positive");
    EcgRecord rec;
    rec.samples = {read_csv_signal(signal_path)};
    rec.header.record_name = signal_path.stem().string();
    rec.header.n_signals = 1;
    rec.header.fs = fs;
    rec.header.n_samples = rec.samples[0].size();
    rec.header.signals = {SignalSpec{signal_path.filename().string(), FormatCode::csv, 1.0, 0, "II"}};
    if (annotation_path) {
        for (const auto& a : read_csv_annotations(*annotation_path)) {
            if (a.sample_index < rec.header.n_samples) rec.annotations.push_back(a);
        }
    }
    return rec;
}

void write_windows_csv(const std::filesystem::path& path, std::span<const Window> windows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "record,center,label";
    for (std::size_t i = 0; i < kWindowLength; ++i) out << ",x" << i;
    out << '\n';
    char buf[40];
    for (const auto& w : windows) {
        if (w.samples.size() != kWindowLength) throw ContractError("window length must be 720");
        out << w.source.record_name << ',' << w.source.center << ',' << class_name(w.label);
        for (double v : w.samples) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Window> read_windows_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Window> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        Window w;
        const char* p = line.c_str();
        const char* comma = std::strchr(p, ',');
        if (!comma) throw ParseError(line_no, "missing record column");
        w.source.record_name.assign(p, comma);
        p = comma + 1;
        char* end = nullptr;
        w.source.center = std::strtoull(p, &end, 10);
        if (end == p || *end != ',') throw ParseError(line_no, "bad center column");
        p = end + 1;
        comma = std::strchr(p, ',');
        if (!comma) throw ParseError(line_no, "missing label column");
        const auto cls = parse_class(std::string_view(p, static_cast<std::size_t>(comma - p)));
        if (!cls) throw ParseError(line_no, "unknown class label");
        w.label = *cls;
        p = comma + 1;
        w.samples.reserve(kWindowLength);
        while (*p) {
            const double v = std::strtod(p, &end);
            if (end == p) throw ParseError(line_no, "bad sample value");
            w.samples.push_back(v);
            p = *end == ',' ? end + 1 : end;
            if (*end && *end != ',' && *end != '\r') throw ParseError(line_no, "bad separator");
            if (*end == '\r') break;
        }
        if (w.samples.size() != kWindowLength) {
            throw ParseError(line_no, "window has " + std::to_string(w.samples.size()) + " samples, expected 720");
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace ecgsal::io
