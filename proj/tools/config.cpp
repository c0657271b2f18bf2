#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ecgsal/error.hpp"

namespace ecgsal::cli {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : schema()) {
        if (k.key == key) return &k;
    }
    return nullptr;
}

}  // namespace

const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> keys = {
        {"seed", std::nullopt, "master seed for data, splits, initialisation and shuffling"},
        {"out", std::string("run"), "output directory"},
        {"data.source", std::string("synthetic"), "synthetic | csv-dir | physionet-dir"},
        {"data.input", std::string(""), "input directory for csv-dir and physionet-dir"},
        {"data.per_class", std::string("400"), "training windows per class"},
        {"data.test_per_class", std::string("100"), "synthetic test windows per class"},
        {"data.record_seconds", std::string("20"), "length of each synthetic record"},
        {"data.csv_fs", std::string("360"), "sampling rate of csv-dir signals"},
        {"model.scale", std::string("desk"), "desk | paper"},
        {"train.epochs", std::string("30"), "classifier epochs"},
        {"train.batch", std::string("16"), "mini-batch size"},
        {"train.learning_rate", std::string("0.005"), "SGD step size"},
        {"train.momentum", std::string("0.7"), "SGD momentum"},
        {"camnet.epochs", std::string("30"), "CAM network epochs"},
        {"select.class", std::string("all"), "class for cam/mask export, or all"},
        {"select.top_k", std::string("1"), "windows exported per class"},
        {"mask.lambda1", std::string("1"), "sparsity weight"},
        {"mask.lambda2", std::string("0.001"), "smoothness weight"},
        {"mask.learning_rate", std::string("0.001"), "mask step size"},
        {"mask.iterations", std::string("500"), "mask iterations"},
        {"mask.k", std::string("0"), "replacement constant"},
        {"mask.convention", std::string("deletion"), "deletion | literal"},
    };
    return keys;
}

std::string env_name(const std::string& key) {
    std::string out = "ECGSAL_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

ExperimentConfig::ExperimentConfig() {
    for (const auto& k : schema()) {
        if (k.default_value) values_[k.key] = *k.default_value;
    }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (!find_key(key)) throw ConfigError("unknown configuration key '" + key + "'");
    values_[key] = value;
}

void ExperimentConfig::load_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void ExperimentConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    load_text(ss.str());
}

void ExperimentConfig::apply_env(const std::function<const char*(const char*)>& lookup) {
    for (const auto& k : schema()) {
        if (const char* v = lookup(env_name(k.key).c_str())) values_[k.key] = v;
    }
}

std::string ExperimentConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing configuration key '" + key + "'");
    return it->second;
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
    const std::string v = get(key);
    std::size_t used = 0;
    std::int64_t out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
    return out;
}

std::size_t ExperimentConfig::get_size(const std::string& key) const {
    const auto v = get_int(key);
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

std::uint64_t ExperimentConfig::get_seed() const {
    const std::string v = get("seed");
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || v.front() == '-') throw ConfigError("seed: '" + v + "' is not an integer");
    return out;
}

double ExperimentConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

void ExperimentConfig::validate() const {
    for (const auto& k : schema()) {
        if (!values_.count(k.key)) throw ConfigError("missing required configuration key '" + k.key + "'");
    }
    get_seed();
    for (const char* key : {"data.per_class", "data.test_per_class", "train.epochs", "train.batch", "camnet.epochs",
                            "select.top_k", "mask.iterations"}) {
        get_size(key);
    }
    for (const char* key : {"data.record_seconds", "data.csv_fs", "train.learning_rate", "train.momentum",
                            "mask.lambda1", "mask.lambda2", "mask.learning_rate", "mask.k"}) {
        get_double(key);
    }
    const std::string source = get("data.source");
    if (source != "synthetic" && source != "csv-dir" && source != "physionet-dir") {
        throw ConfigError("data.source must be synthetic, csv-dir or physionet-dir");
    }
    if (source != "synthetic" && !std::filesystem::is_directory(get("data.input"))) {
        throw ConfigError("data.input '" + get("data.input") + "' is not a directory");
    }
    const std::string scale = get("model.scale");
    if (scale != "desk" && scale != "paper") throw ConfigError("model.scale must be desk or paper");
}

std::string ExperimentConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        if (k != "out") out += k + "=" + v + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string ExperimentConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

}  // namespace ecgsal::cli
