#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "ecgsal/error.hpp"

int main(int argc, char** argv) {
    using namespace ecgsal::cli;

    CLI::App app{"ECG arrhythmia classification with CAM and mask saliency"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::string> seed;
    std::optional<std::string> out;
    std::optional<std::string> cls;
    std::optional<std::string> top_k;
    std::optional<std::string> convention;
    app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides seed)");
    app.add_option("--out", out, "output directory (overrides out)");
    app.add_option("--class", cls, "class to export, or all (overrides select.class)");
    app.add_option("--top-k", top_k, "windows exported per class (overrides select.top_k)");
    app.add_option("--convention", convention, "mask convention (overrides mask.convention)")
        ->check(CLI::IsMember({"deletion", "literal"}));

    app.add_subcommand("synth", "generate a synthetic dataset");
    app.add_subcommand("ingest", "window and split PhysioNet or CSV records");
    app.add_subcommand("train", "train the classifier and the CAM network");
    app.add_subcommand("eval", "write metrics and confusion matrices");
    app.add_subcommand("cam", "export class activation map overlays");
    app.add_subcommand("mask", "learn deletion masks and export overlays");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    ExperimentConfig config;
    try {
        if (!config_path.empty()) config.load_file(config_path);
        config.apply_env([](const char* name) { return std::getenv(name); });
        if (seed) config.set("seed", *seed);
        if (out) config.set("out", *out);
        if (cls) config.set("select.class", *cls);
        if (top_k) config.set("select.top_k", *top_k);
        if (convention) config.set("mask.convention", *convention);
    } catch (const ecgsal::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kUsage;
    }
    return run(app.get_subcommands().front()->get_name(), config, std::cout, std::cerr);
}
