#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

#include <json.hpp>

#include "ecgsal/error.hpp"
#include "ecgsal/models.hpp"
#include "ecgsal/overlay.hpp"
#include "ecgsal/saliency.hpp"
#include "ecgsal/synth.hpp"
#include "ecgsal/train.hpp"

namespace ecgsal::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kCodeVersion = "0.1.0";

// Independent stream per purpose, derived from the master seed.
enum Stream : std::uint32_t {
    kTrainData = 1,
    kTestData = 2,
    kClassifierInit = 3,
    kClassifierShuffle = 4,
    kCamInit = 5,
    kCamShuffle = 6,
    kSplit = 7,
};

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::uint32_t w[2];
    seq.generate(w, w + 2);
    return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

class Run {
public:
    Run(std::string verb, const ExperimentConfig& config, std::ostream& log)
        : verb_(std::move(verb)), config_(config), log_(log), root_(config.get("out")) {
        fs::create_directories(root_);
    }

    const ExperimentConfig& config() const { return config_; }
    std::ostream& log() { return log_; }
    fs::path path(const std::string& rel) const { return root_ / rel; }
    fs::path data_dir() const { return root_ / "data"; }

    /// Creates parent directories and returns the absolute path of a new output.
    fs::path output(const std::string& rel) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        outputs_.push_back(rel);
        return p;
    }

    void write_text(const std::string& rel, const std::string& text) {
        const fs::path p = output(rel);
        std::ofstream out(p, std::ios::binary);
        out << text;
        if (!out) throw IoError("cannot write " + p.string());
    }

    template <class F>
    auto timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings_[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            auto r = f();
            timings_[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return r;
        }
    }

    void note(const std::string& text) { notes_.push_back(text); }
    json& extra() { return extra_; }

    void write_manifest() {
        const std::string rel = "manifests/" + verb_ + ".json";
        outputs_.push_back(rel);
        json m;
        m["command"] = verb_;
        m["config_hash"] = "fnv1a64:" + config_.hash();
        m["code_version"] = kCodeVersion;
        m["seeds"] = {{"seed", config_.get_seed()}};
        json t = json::object();
        for (const auto& [k, v] : timings_) t[k] = v;
        m["timings_s"] = t;
        m["outputs"] = outputs_;
        m["notes"] = notes_;
        if (!extra_.is_null()) m["details"] = extra_;
        json c = json::object();
        for (const auto& [k, v] : config_.values()) c[k] = v;
        m["config"] = c;
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p);
        out << m.dump(2) << "\n";
        if (!out) throw IoError("cannot write " + p.string());
    }

private:
    std::string verb_;
    const ExperimentConfig& config_;
    std::ostream& log_;
    fs::path root_;
    std::vector<std::string> outputs_;
    std::vector<std::string> notes_;
    std::map<std::string, double> timings_;
    json extra_;
};

models::ClassifierConfig classifier_config(const ExperimentConfig& c) {
    return c.get("model.scale") == "paper" ? models::ClassifierConfig::paper_scale()
                                           : models::ClassifierConfig::desk_scale();
}

models::CamNetConfig camnet_config(const ExperimentConfig& c) {
    return c.get("model.scale") == "paper" ? models::CamNetConfig::paper_scale() : models::CamNetConfig::desk_scale();
}

saliency::MaskConfig mask_config(const ExperimentConfig& c) {
    saliency::MaskConfig m;
    m.lambda1 = c.get_double("mask.lambda1");
    m.lambda2 = c.get_double("mask.lambda2");
    m.learning_rate = c.get_double("mask.learning_rate");
    m.iterations = c.get_size("mask.iterations");
    m.k = c.get_double("mask.k");
    m.convention = saliency::parse_convention(c.get("mask.convention"));
    m.validate();
    return m;
}

std::vector<io::Window> read_split(Run& run, const std::string& name) {
    const fs::path p = run.data_dir() / (name + ".csv");
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (run synth or ingest first)");
    return io::read_windows_csv(p);
}

models::ClassifierModel load_classifier(Run& run) {
    const auto& c = run.config();
    models::ClassifierModel model(classifier_config(c), derive_seed(c.get_seed(), kClassifierInit));
    const fs::path p = run.path("models/classifier.ckpt");
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (run train first)");
    ad::restore_checkpoint(p.string(), model.state());
    return model;
}

models::CamNetModel load_camnet(Run& run) {
    const auto& c = run.config();
    models::CamNetModel model(camnet_config(c), derive_seed(c.get_seed(), kCamInit));
    const fs::path p = run.path("models/camnet.ckpt");
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (run train first)");
    ad::restore_checkpoint(p.string(), model.state());
    return model;
}

std::vector<io::RhythmClass> selected_classes(const ExperimentConfig& c) {
    const std::string v = c.get("select.class");
    if (v == "all") {
        std::vector<io::RhythmClass> all;
        for (std::size_t i = 0; i < io::kClassCount; ++i) all.push_back(io::class_from_index(static_cast<int>(i)));
        return all;
    }
    const auto cls = io::parse_class(v);
    if (!cls) throw ConfigError("select.class: unknown class '" + v + "'");
    return {*cls};
}

/// Correctly classified windows of `cls`, highest confidence first.
std::vector<std::size_t> select_windows(std::span<const io::Window> windows,
                                        std::span<const training::Prediction> preds, io::RhythmClass cls,
                                        std::size_t top_k) {
    const int c = io::class_index(cls);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].label == cls && preds[i].label == c) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return preds[a].probabilities[c] > preds[b].probabilities[c];
    });
    if (idx.size() > top_k) idx.resize(top_k);
    return idx;
}

std::string record_truth_csv(const synth::GroundTruth& truth) {
    std::string out = "start,end\n";
    for (const auto& iv : truth.intervals) out += std::to_string(iv.start) + "," + std::to_string(iv.end) + "\n";
    return out;
}

int cmd_synth(Run& run) {
    const auto& c = run.config();
    const std::uint64_t seed = c.get_seed();
    const double seconds = c.get_double("data.record_seconds");
    const std::pair<const char*, synth::SynthDataset> splits[] = {
        {"train", run.timed("generate_train", [&] {
             return synth::generate_dataset(c.get_size("data.per_class"), derive_seed(seed, kTrainData), seconds);
         })},
        {"test", run.timed("generate_test", [&] {
             return synth::generate_dataset(c.get_size("data.test_per_class"), derive_seed(seed, kTestData), seconds);
         })},
    };
    json counts = json::object();
    for (const auto& [name, ds] : splits) {
        const std::string split = name;
        for (const auto& rec : ds.records) {
            const std::string stem = "data/records/" + split + "/" + rec.record.header.record_name;
            io::write_csv_signal(run.output(stem + ".csv"), rec.record.samples.at(0));
            io::write_csv_annotations(run.output(stem + ".ann.csv"), rec.record.annotations);
            run.write_text(stem + ".truth.csv", record_truth_csv(rec.truth));
        }
        io::write_windows_csv(run.output("data/" + split + ".csv"), ds.windows);
        synth::write_truth_csv(run.output("data/" + split + "_truth.csv"), ds.windows, ds.window_truths);
        counts[split] = {{"records", ds.records.size()}, {"windows", ds.windows.size()}};
        run.log() << split << ": " << ds.windows.size() << " windows from " << ds.records.size() << " records\n";
    }
    run.extra() = {{"counts", counts}, {"spec_table_version", synth::kSpecTableVersion}};
    run.write_manifest();
    return kOk;
}

int cmd_ingest(Run& run) {
    const auto& c = run.config();
    const std::string source = c.get("data.source");
    if (source == "synthetic") throw ConfigError("ingest reads data.input; set data.source to csv-dir or physionet-dir");
    const fs::path input = c.get("data.input");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
        const std::string name = e.path().filename().string();
        const bool is_header = source == "physionet-dir" && e.path().extension() == ".hea";
        const bool is_signal = source == "csv-dir" && e.path().extension() == ".csv" &&
                               name.find(".ann.") == std::string::npos && name.find(".truth.") == std::string::npos;
        if (is_header || is_signal) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<io::Window> all;
    std::size_t skipped = 0;
    run.timed("load", [&] {
        for (const auto& f : files) {
            io::EcgRecord rec;
            if (source == "physionet-dir") {
                rec = io::load_physionet_record(f);
            } else {
                fs::path ann = f;
                ann.replace_extension(".ann.csv");
                rec = io::load_csv_record(f, c.get_double("data.csv_fs"),
                                          fs::exists(ann) ? std::optional<fs::path>(ann) : std::nullopt);
            }
            if (rec.header.fs != static_cast<double>(io::kTargetFs)) rec = io::resample_linear(rec, io::kTargetFs);
            auto ex = io::extract_windows(rec, io::lead_ii_channel(rec.header));
            skipped += ex.skipped_boundary;
            for (auto& w : ex.windows) all.push_back(std::move(w));
        }
    });
    const auto split = io::balance_classes(all, c.get_size("data.per_class"), derive_seed(c.get_seed(), kSplit));
    io::write_windows_csv(run.output("data/train.csv"), split.train);
    io::write_windows_csv(run.output("data/test.csv"), split.test);
    run.extra() = {{"records", files.size()},
                   {"windows", all.size()},
                   {"skipped_boundary", skipped},
                   {"train", split.train.size()},
                   {"test", split.test.size()}};
    run.log() << "ingested " << files.size() << " records: " << split.train.size() << " train, " << split.test.size()
              << " test windows\n";
    run.write_manifest();
    return kOk;
}

template <class Model>
std::vector<double> fit(Run& run, Model& model, std::span<const io::Window> data, const std::string& name,
                        std::size_t epochs, Stream shuffle) {
    const auto& c = run.config();
    training::TrainConfig tc;
    tc.learning_rate = c.get_double("train.learning_rate");
    tc.momentum = c.get_double("train.momentum");
    tc.batch_size = c.get_size("train.batch");
    tc.epochs = epochs;
    tc.seed = derive_seed(c.get_seed(), shuffle);
    tc.checkpoint_dir = run.path("checkpoints/" + name).string();
    auto result = run.timed("train_" + name, [&] {
        return training::train(model, data, tc, [&](std::size_t e, double loss) {
            run.log() << name << " epoch " << e + 1 << "/" << epochs << " loss " << loss << "\n";
        });
    });
    for (std::size_t e = 0; e < epochs; ++e) run.output("checkpoints/" + name + "/epoch_" + std::to_string(e + 1) + ".ckpt");
    ad::save_checkpoint(run.output("models/" + name + ".ckpt").string(), model.state());
    run.write_text("train/" + name + "_loss.csv", training::loss_curve_csv(result.loss_curve));
    return result.loss_curve;
}

int cmd_train(Run& run) {
    const auto& c = run.config();
    const auto train = read_split(run, "train");
    const std::uint64_t seed = c.get_seed();
    models::ClassifierModel classifier(classifier_config(c), derive_seed(seed, kClassifierInit));
    fit(run, classifier, train, "classifier", c.get_size("train.epochs"), kClassifierShuffle);
    models::CamNetModel camnet(camnet_config(c), derive_seed(seed, kCamInit));
    fit(run, camnet, train, "camnet", c.get_size("camnet.epochs"), kCamShuffle);
    run.write_manifest();
    return kOk;
}

int cmd_eval(Run& run) {
    const auto test = read_split(run, "test");
    const auto classifier = load_classifier(run);
    const auto camnet = load_camnet(run);
    const auto m = run.timed("eval_classifier", [&] { return training::evaluate(classifier, test); });
    run.write_text("eval/metrics.csv", training::metrics_csv(m));
    run.write_text("eval/confusion.csv", training::confusion_csv(m));
    const auto mc = run.timed("eval_camnet", [&] { return training::evaluate(camnet, test); });
    run.write_text("eval/camnet_metrics.csv", training::metrics_csv(mc));
    run.write_text("eval/camnet_confusion.csv", training::confusion_csv(mc));
    run.extra() = {{"classifier", {{"macro_f1", m.macro_f1}, {"accuracy", m.accuracy}}},
                   {"camnet", {{"macro_f1", mc.macro_f1}, {"accuracy", mc.accuracy}}}};
    run.log() << "classifier macro-F1 " << m.macro_f1 << " accuracy " << m.accuracy << "\n";
    run.log() << "camnet macro-F1 " << mc.macro_f1 << " accuracy " << mc.accuracy << "\n";
    const bool partial = m.partial() || mc.partial();
    if (partial) run.note("some classes are absent from the test set; their metrics are undefined");
    run.write_manifest();
    return partial ? kData : kOk;
}

std::string export_stem(const std::string& dir, io::RhythmClass cls, std::size_t rank) {
    return dir + "/" + std::string(io::class_name(cls)) + "_" + std::to_string(rank + 1);
}

int cmd_cam(Run& run) {
    const auto& c = run.config();
    const auto test = read_split(run, "test");
    const auto model = load_camnet(run);
    const auto preds = run.timed("predict", [&] { return training::predict(model, test); });
    json windows = json::array();
    for (const auto cls : selected_classes(c)) {
        const auto chosen = select_windows(test, preds, cls, c.get_size("select.top_k"));
        if (chosen.empty()) {
            run.note("no correctly classified " + std::string(io::class_name(cls)) + " window");
            continue;
        }
        for (std::size_t r = 0; r < chosen.size(); ++r) {
            const auto& w = test[chosen[r]];
            const auto cam = saliency::cam_for_window(model, w.samples, cls);
            const std::string stem = export_stem("cam", cls, r);
            run.write_text(stem + ".csv", overlay::overlay_csv(w.samples, cam.overlay));
            run.write_text(stem + ".svg", overlay::overlay_svg(w.samples, cam.overlay, "CAM " + w.id()));
            windows.push_back({{"window", w.id()},
                               {"class", io::class_name(cls)},
                               {"confidence", preds[chosen[r]].probabilities[io::class_index(cls)]},
                               {"files", stem}});
        }
    }
    run.extra() = {{"windows", windows}};
    run.write_manifest();
    return kOk;
}

std::string loss_history_csv(const saliency::MaskState& st) {
    std::string out = "iteration,total,term1,term2,term3\n";
    char buf[160];
    auto row = [&](std::size_t i, const saliency::LossTerms& t) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, t.total, t.term1, t.term2, t.term3);
        out += buf;
    };
    for (std::size_t i = 0; i < st.history.size(); ++i) row(i, st.history[i]);
    row(st.history.size(), st.final);
    return out;
}

int cmd_mask(Run& run) {
    const auto& c = run.config();
    const auto mc = mask_config(c);
    const auto test = read_split(run, "test");
    const auto model = load_classifier(run);
    const auto preds = run.timed("predict", [&] { return training::predict(model, test); });
    json windows = json::array();
    for (const auto cls : selected_classes(c)) {
        const auto chosen = select_windows(test, preds, cls, c.get_size("select.top_k"));
        if (chosen.empty()) {
            run.note("no correctly classified " + std::string(io::class_name(cls)) + " window");
            continue;
        }
        for (std::size_t r = 0; r < chosen.size(); ++r) {
            const auto& w = test[chosen[r]];
            const auto target = static_cast<std::size_t>(io::class_index(cls));
            const auto st = run.timed("mask_" + w.id(), [&] {
                return saliency::optimize_mask(saliency::lstm_path(model, w.samples), w.samples, target, mc);
            });
            if (st.warning) run.note(w.id() + ": " + *st.warning);
            const auto ov = saliency::saliency_from_mask(st.m, mc.convention);
            const std::string stem = export_stem("mask", cls, r);
            run.write_text(stem + ".csv", overlay::overlay_csv(w.samples, ov));
            run.write_text(stem + ".svg", overlay::overlay_svg(w.samples, ov, "mask " + w.id()));
            run.write_text(stem + "_loss.csv", loss_history_csv(st));
            windows.push_back({{"window", w.id()},
                               {"class", io::class_name(cls)},
                               {"initial_loss", st.history.front().total},
                               {"final_loss", st.final.total},
                               {"initial_confidence", st.history.front().term3},
                               {"final_confidence", st.final.term3},
                               {"files", stem}});
        }
    }
    run.extra() = {{"convention", saliency::convention_name(mc.convention)}, {"windows", windows}};
    run.write_manifest();
    return kOk;
}

}  // namespace

const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v = {"synth", "ingest", "train", "eval", "cam", "mask"};
    return v;
}

int run(const std::string& verb, const ExperimentConfig& config, std::ostream& log, std::ostream& err) {
    try {
        config.validate();
        Run r(verb, config, log);
        if (verb == "synth") return cmd_synth(r);
        if (verb == "ingest") return cmd_ingest(r);
        if (verb == "train") return cmd_train(r);
        if (verb == "eval") return cmd_eval(r);
        if (verb == "cam") return cmd_cam(r);
        if (verb == "mask") return cmd_mask(r);
        err << "unknown command '" << verb << "'\n";
        return kUsage;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kData;
    }
}

}  // namespace ecgsal::cli
