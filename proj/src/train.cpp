#include "ecgsal/train.hpp"

#include <cstdio>
#include <filesystem>

namespace ecgsal::training {
namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "undefined"; }

double mean_defined(const std::array<ClassScores, io::kClassCount>& scores,
                    std::optional<double> ClassScores::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores) {
        if (s.*field) {
            sum += *(s.*field);
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

ad::Tensor stack_windows(std::span<const io::Window> windows, std::span<const std::size_t> rows) {
    ad::Tensor x({rows.size(), io::kWindowLength});
    auto v = x.values();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& s = windows[rows[r]].samples;
        if (s.size() != io::kWindowLength) {
            throw ShapeError("window " + windows[rows[r]].id() + " has " + std::to_string(s.size()) + " samples");
        }
        std::copy(s.begin(), s.end(), v.begin() + r * io::kWindowLength);
    }
    return x;
}

std::vector<int> labels_of(std::span<const io::Window> windows, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(io::class_index(windows[r].label));
    return out;
}

std::string checkpoint_path(const std::string& dir, std::size_t epoch) {
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string();
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

bool Metrics::partial() const {
    for (const auto& s : per_class) {
        if (!s.precision || !s.recall || !s.f1) return true;
    }
    return false;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
    Metrics m;
    m.total = truth.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = predicted[i];
        if (t < 0 || p < 0 || t >= static_cast<int>(io::kClassCount) || p >= static_cast<int>(io::kClassCount)) {
            throw ContractError("class index out of range");
        }
        ++m.confusion[t][p];
        if (t == p) ++correct;
    }
    for (std::size_t c = 0; c < io::kClassCount; ++c) {
        std::size_t support = 0;
        std::size_t predicted_c = 0;
        for (std::size_t j = 0; j < io::kClassCount; ++j) {
            support += m.confusion[c][j];
            predicted_c += m.confusion[j][c];
        }
        const double tp = static_cast<double>(m.confusion[c][c]);
        ClassScores& s = m.per_class[c];
        s.support = support;
        if (support > 0) s.recall = tp / static_cast<double>(support);
        if (predicted_c > 0) {
            s.precision = tp / static_cast<double>(predicted_c);
        } else if (support > 0) {
            s.precision = 0.0;
        }
        if (support + predicted_c > 0) s.f1 = 2.0 * tp / static_cast<double>(support + predicted_c);
    }
    m.macro_precision = mean_defined(m.per_class, &ClassScores::precision);
    m.macro_recall = mean_defined(m.per_class, &ClassScores::recall);
    m.macro_f1 = mean_defined(m.per_class, &ClassScores::f1);
    m.accuracy = m.total ? static_cast<double>(correct) / static_cast<double>(m.total) : 0.0;
    return m;
}

std::string metrics_csv(const Metrics& m) {
    std::string out = "class,precision,recall,f1,support\n";
    for (std::size_t c = 0; c < io::kClassCount; ++c) {
        const auto& s = m.per_class[c];
        out += std::string(io::class_name(io::class_from_index(static_cast<int>(c)))) + "," + fmt(s.precision) +
               "," + fmt(s.recall) + "," + fmt(s.f1) + "," + std::to_string(s.support) + "\n";
    }
    out += "macro," + fmt(m.macro_precision) + "," + fmt(m.macro_recall) + "," + fmt(m.macro_f1) + "," +
           std::to_string(m.total) + "\n";
    out += "accuracy," + fmt(m.accuracy) + ",,," + std::to_string(m.total) + "\n";
    return out;
}

std::string confusion_csv(const Metrics& m) {
    std::string out = "truth\\predicted";
    for (std::size_t c = 0; c < io::kClassCount; ++c) {
        out += "," + std::string(io::class_name(io::class_from_index(static_cast<int>(c))));
    }
    out += "\n";
    for (std::size_t t = 0; t < io::kClassCount; ++t) {
        out += std::string(io::class_name(io::class_from_index(static_cast<int>(t))));
        for (std::size_t p = 0; p < io::kClassCount; ++p) out += "," + std::to_string(m.confusion[t][p]);
        out += "\n";
    }
    return out;
}

std::string loss_curve_csv(std::span<const double> curve) {
    std::string out = "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < curve.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, curve[e]);
        out += buf;
    }
    return out;
}

}  // namespace ecgsal::training
