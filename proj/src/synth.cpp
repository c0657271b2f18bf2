#include "ecgsal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "ecgsal/error.hpp"
#include "ecgsal/random.hpp"

namespace ecgsal::synth {
namespace {

using io::RhythmClass;

constexpr double kFs = io::kTargetFs;
constexpr double kSupportWidths = 3.0;  // template support, in bump widths
constexpr double kEvalWidths = 6.0;     // evaluation cut-off when rendering

// Adds `scale` times the bumps of `beat`, R at time r_time (s), into x.
void render_beat(std::vector<double>& x, const BeatTemplate& beat, double r_time, double scale) {
    const auto n = static_cast<long>(x.size());
    for (const auto& b : beat.components) {
        if (b.amplitude == 0.0) continue;
        const double center = r_time + b.offset;
        const long lo = std::max(0L, static_cast<long>(std::floor((center - kEvalWidths * b.width) * kFs)));
        const long hi = std::min(n - 1, static_cast<long>(std::ceil((center + kEvalWidths * b.width) * kFs)));
        for (long i = lo; i <= hi; ++i) {
            const double d = (static_cast<double>(i) / kFs - center) / b.width;
            x[static_cast<std::size_t>(i)] += scale * b.amplitude * std::exp(-0.5 * d * d);
        }
    }
}

BeatTemplate without_p(BeatTemplate t) {
    std::erase_if(t.components, [](const Bump& b) { return b.wave == Wave::P; });
    return t;
}

std::size_t to_index(double seconds) { return static_cast<std::size_t>(std::llround(std::max(0.0, seconds) * kFs)); }

}  // namespace

double BeatTemplate::support() const {
    if (components.empty()) return 0.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& b : components) {
        lo = std::min(lo, b.offset - kSupportWidths * b.width);
        hi = std::max(hi, b.offset + kSupportWidths * b.width);
    }
    return hi - lo;
}

double BeatTemplate::onset() const {
    double lo = 0.0;
    for (const auto& b : components) lo = std::min(lo, b.offset - kSupportWidths * b.width);
    return lo;
}

void BeatTemplate::validate() const {
    bool has_r = false;
    for (const auto& b : components) {
        if (!(b.width > 0.0)) throw ConfigError("beat template bump widths must be positive");
        if (b.wave == Wave::R) {
            has_r = true;
            if (!(b.amplitude > 0.0)) throw ConfigError("beat template R amplitude must be positive");
        }
    }
    if (!has_r) throw ConfigError("beat template needs an R bump");
}

BeatTemplate normal_template() {
    return {{
        {Wave::P, 0.15, -0.20, 0.025},
        {Wave::Q, -0.10, -0.025, 0.010},
        {Wave::R, 1.00, 0.0, 0.012},
        {Wave::S, -0.20, 0.025, 0.010},
        {Wave::T, 0.30, 0.25, 0.050},
    }};
}

void RhythmSpec::validate() const {
    if (!(rate_bpm >= 20.0 && rate_bpm <= 250.0)) throw ConfigError("rhythm rate must lie in [20, 250] bpm");
    if (!(rate_jitter >= 0.0)) throw ConfigError("rhythm jitter must be non-negative");
    if (!(noise_sigma >= 0.0) || !(wander_amplitude >= 0.0) || !(fibrillation_amplitude >= 0.0)) {
        throw ConfigError("noise amplitudes must be non-negative");
    }
    if (!(ectopic_probability >= 0.0 && ectopic_probability <= 1.0)) {
        throw ConfigError("ectopic probability must lie in [0, 1]");
    }
    beat.validate();
    if (ectopic) ectopic->validate();
}

RhythmSpec default_spec(RhythmClass label) {
    RhythmSpec s;
    s.label = label;
    switch (label) {
        case RhythmClass::N:
            s.rate_jitter = 0.04;
            break;
        case RhythmClass::PVC: {
            s.rate_jitter = 0.04;
            s.ectopic = BeatTemplate{{
                {Wave::R, 1.30, 0.0, 0.035},
                {Wave::S, -0.40, 0.07, 0.030},
                {Wave::T, -0.55, 0.30, 0.070},
            }};
            s.ectopic_probability = 0.3;
            s.ectopic_prematurity = 0.6;
            s.post_ectopic_interval = 1.4;
            s.truth = TruthKind::ectopic_beat;
            s.truth_before = 0.10;
            s.truth_after = 0.45;
            break;
        }
        case RhythmClass::PAC: {
            s.rate_jitter = 0.04;
            BeatTemplate pac = normal_template();
            pac.components[0] = {Wave::P, -0.12, -0.16, 0.022};
            s.ectopic = pac;
            s.ectopic_probability = 0.3;
            s.ectopic_prematurity = 0.62;
            s.post_ectopic_interval = 1.05;
            s.truth = TruthKind::ectopic_beat;
            s.truth_before = 0.25;
            s.truth_after = 0.45;
            break;
        }
        case RhythmClass::AFIB:
            s.rate_bpm = 100.0;
            s.rate_jitter = 0.2;
            s.beat = without_p(normal_template());
            s.fibrillation_amplitude = 0.05;
            s.truth = TruthKind::fibrillation;
            break;
        case RhythmClass::SVTA: {
            s.rate_bpm = 170.0;
            s.rate_jitter = 0.02;
            BeatTemplate b = without_p(normal_template());
            b.components.back() = {Wave::T, 0.22, 0.16, 0.035};
            s.beat = b;
            s.truth = TruthKind::whole_record;
            break;
        }
        case RhythmClass::SBR:
            s.rate_bpm = 45.0;
            s.rate_jitter = 0.04;
            s.truth = TruthKind::whole_record;
            break;
        case RhythmClass::LBBB:
            s.rate_jitter = 0.04;
            s.beat = BeatTemplate{{
                {Wave::P, 0.15, -0.22, 0.025},
                {Wave::R, 0.80, -0.015, 0.018},
                {Wave::R, 0.90, 0.025, 0.020},
                {Wave::S, -0.15, 0.065, 0.015},
                {Wave::T, -0.35, 0.28, 0.060},
            }};
            s.truth = TruthKind::qrs;
            s.truth_before = 0.08;
            s.truth_after = 0.10;
            break;
        case RhythmClass::RBBB:
            s.rate_jitter = 0.04;
            s.beat = BeatTemplate{{
                {Wave::P, 0.15, -0.20, 0.025},
                {Wave::R, 0.55, 0.0, 0.010},
                {Wave::S, -0.35, 0.030, 0.012},
                {Wave::R, 0.70, 0.070, 0.016},
                {Wave::T, 0.20, 0.30, 0.050},
            }};
            s.truth = TruthKind::qrs;
            s.truth_before = 0.05;
            s.truth_after = 0.13;
            break;
    }
    return s;
}

std::vector<double> synth_beat(const BeatTemplate& beat, double fs, double rr) {
    if (!(fs > 0.0)) throw ContractError("synth_beat: sampling rate must be positive");
    if (!(rr > beat.support())) throw ContractError("synth_beat: RR interval shorter than the template support");
    const auto n = static_cast<std::size_t>(std::llround(rr * fs));
    const auto r_index = static_cast<double>(std::llround(-beat.onset() * fs));
    std::vector<double> out(n, 0.0);
    for (const auto& b : beat.components) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = ((static_cast<double>(i) - r_index) / fs - b.offset) / b.width;
            out[i] += b.amplitude * std::exp(-0.5 * d * d);
        }
    }
    return out;
}

SynthRecord generate_record(const RhythmSpec& spec, double duration_s, std::uint64_t seed, const std::string& name) {
    spec.validate();
    if (!(duration_s >= 4.0)) throw ContractError("generate_record: duration must be at least 4 s");
    std::mt19937_64 rng(seed);
    const std::size_t n = to_index(duration_s);
    const double rr_mean = 60.0 / spec.rate_bpm;

    struct Beat {
        double time;
        bool ectopic;
    };
    std::vector<Beat> beats;
    double t = 0.0;
    bool prev_ectopic = false;
    std::size_t normal_run = 0;
    for (std::size_t k = 0;; ++k) {
        const double rr = rr_mean * std::max(0.4, 1.0 + spec.rate_jitter * gaussian(rng));
        const bool forced = std::find(spec.forced_ectopic.begin(), spec.forced_ectopic.end(), k) !=
                            spec.forced_ectopic.end();
        const double draw = uniform01(rng);
        bool ectopic = false;
        if (spec.ectopic && k > 0) {
            ectopic = forced || (normal_run >= 2 && draw < spec.ectopic_probability);
        }
        if (k > 0) {
            const double factor = ectopic ? spec.ectopic_prematurity : prev_ectopic ? spec.post_ectopic_interval : 1.0;
            t += rr * factor;
        }
        if (to_index(t) >= n) break;
        beats.push_back({t, ectopic});
        prev_ectopic = ectopic;
        normal_run = ectopic ? 0 : normal_run + 1;
    }

    const double gain = 1.0 + uniform(rng, -spec.amplitude_jitter, spec.amplitude_jitter);
    std::vector<double> x(n, 0.0);
    for (const auto& b : beats) {
        const BeatTemplate& tpl = b.ectopic ? *spec.ectopic : spec.beat;
        render_beat(x, tpl, b.time, gain);
    }

    const double wander_f = uniform(rng, 0.15, 0.4);
    const double wander_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    struct Component {
        double amp, freq, phase;
    };
    std::vector<Component> fib;
    if (spec.fibrillation_amplitude > 0.0) {
        for (int i = 0; i < 3; ++i) {
            fib.push_back({spec.fibrillation_amplitude * uniform(rng, 0.7, 1.3), uniform(rng, 4.0, 9.0),
                           uniform(rng, 0.0, 2.0 * std::numbers::pi)});
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / kFs;
        double v = spec.wander_amplitude * std::sin(2.0 * std::numbers::pi * wander_f * ti + wander_phase);
        for (const auto& c : fib) v += c.amp * std::sin(2.0 * std::numbers::pi * c.freq * ti + c.phase);
        x[i] += v + spec.noise_sigma * gaussian(rng);
    }

    SynthRecord out;
    auto& rec = out.record;
    rec.header.record_name = name;
    rec.header.n_signals = 1;
    rec.header.fs = kFs;
    rec.header.n_samples = n;
    rec.header.signals = {io::SignalSpec{name + ".csv", io::FormatCode::csv, 1.0, 0, "II"}};
    rec.samples = {std::move(x)};
    for (const auto& b : beats) {
        const bool is_class_beat = !spec.ectopic || b.ectopic;
        rec.annotations.push_back({to_index(b.time), is_class_beat ? spec.label : RhythmClass::N});
    }

    auto clip = [n](double start_s, double end_s) {
        Interval iv{to_index(start_s), std::min(n, to_index(end_s))};
        return iv;
    };
    auto& gt = out.truth.intervals;
    switch (spec.truth) {
        case TruthKind::none: break;
        case TruthKind::whole_record: gt.push_back({0, n}); break;
        case TruthKind::ectopic_beat:
        case TruthKind::qrs:
            for (const auto& b : beats) {
                if (spec.truth == TruthKind::ectopic_beat && !b.ectopic) continue;
                gt.push_back(clip(b.time - spec.truth_before, b.time + spec.truth_after));
            }
            break;
        case TruthKind::fibrillation:
            for (std::size_t k = 0; k + 1 < beats.size(); ++k) {
                const double a = beats[k].time + 0.06, b = beats[k + 1].time - 0.06;
                if (b > a) gt.push_back(clip(a, b));
            }
            break;
    }
    std::erase_if(gt, [](const Interval& iv) { return iv.end <= iv.start; });
    return out;
}

std::vector<Interval> window_truth(const GroundTruth& truth, std::size_t center) {
    std::vector<Interval> out;
    if (center < io::kHalfWindow) return out;
    const std::size_t lo = center - io::kHalfWindow, hi = center + io::kHalfWindow;
    for (const auto& iv : truth.intervals) {
        const std::size_t s = std::max(iv.start, lo), e = std::min(iv.end, hi);
        if (e > s) out.push_back({s - lo, e - lo});
    }
    return out;
}

SynthDataset generate_dataset(std::size_t per_class, std::uint64_t seed, double record_seconds) {
    SynthDataset ds;
    for (std::size_t c = 0; c < io::kClassCount; ++c) {
        const auto label = static_cast<RhythmClass>(c);
        const RhythmSpec spec = default_spec(label);
        std::size_t have = 0;
        for (std::uint64_t r = 0; have < per_class; ++r) {
            // Distinct, reproducible stream per (class, record).
            std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                               static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)};
            std::uint32_t words[2];
            sseq.generate(words, words + 2);
            const std::uint64_t rec_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
            const std::string name = "syn_" + std::string(io::class_name(label)) + "_" + std::to_string(r);
            auto rec = generate_record(spec, record_seconds, rec_seed, name);
            auto extracted = io::extract_windows(rec.record, 0);
            for (auto& w : extracted.windows) {
                if (w.label != label || have == per_class) continue;
                ds.window_truths.push_back(window_truth(rec.truth, w.source.center));
                ds.windows.push_back(std::move(w));
                ++have;
            }
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

void write_truth_csv(const std::filesystem::path& path, std::span<const io::Window> windows,
                     std::span<const std::vector<Interval>> truths) {
    if (windows.size() != truths.size()) throw ShapeError("write_truth_csv: one truth list per window required");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "window,start,end\n";
    for (std::size_t i = 0; i < windows.size(); ++i) {
        for (const auto& iv : truths[i]) out << windows[i].id() << ',' << iv.start << ',' << iv.end << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, std::vector<Interval>> read_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::vector<Interval>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        const auto b = line.rfind(',');
        const auto a = b == std::string::npos ? b : line.rfind(',', b - 1);
        if (a == std::string::npos) throw ParseError(line_no, "expected window,start,end");
        try {
            out[line.substr(0, a)].push_back(
                {std::stoul(line.substr(a + 1, b - a - 1)), std::stoul(line.substr(b + 1))});
        } catch (const std::logic_error&) {
            throw ParseError(line_no, "bad interval bounds");
        }
    }
    return out;
}

}  // namespace ecgsal::synth
