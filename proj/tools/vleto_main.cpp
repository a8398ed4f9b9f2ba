#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vleto/vleto.hpp"

int main(int argc, char** argv) {
    CLI::App app{"vertical federated continual learning simulator"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
    std::string config_path;
    run->add_option("--config", config_path, "experiment config file")->required();
    std::uint64_t seed_override = 0;
    bool has_seed = false;
    run->add_option("--seed", seed_override, "override the config seed")
        ->each([&has_seed](const std::string&) { has_seed = true; });
    bool export_prototypes = false, dump_fisher = false, dump_trace = false, quiet = false;
    run->add_flag("--export-prototypes", export_prototypes,
                  "write prototypes.json (one entry per seen class per task)");
    run->add_flag("--dump-fisher", dump_fisher, "write fisher_<party>_<task>.json dumps");
    run->add_flag("--dump-trace", dump_trace, "write trace.jsonl with every round message");
    run->add_flag("--quiet", quiet, "suppress per-task progress output");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as CSV");
    std::string out_path;
    gen->add_option("--out", out_path, "output CSV path")->required();
    std::size_t g_samples = 1600, g_features = 16;
    int g_classes = 8;
    double g_separation = 4.0;
    std::uint64_t g_seed = 1;
    gen->add_option("--samples", g_samples, "number of samples");
    gen->add_option("--features", g_features, "number of feature columns");
    gen->add_option("--classes", g_classes, "number of classes");
    gen->add_option("--separation", g_separation, "class mean sphere radius");
    gen->add_option("--seed", g_seed, "generator seed");

    // compare
    auto* cmp = app.add_subcommand("compare", "compare metrics.csv files from matching runs");
    std::vector<std::string> metric_files;
    cmp->add_option("files", metric_files, "metrics.csv files")->required()->expected(-2);
    std::string cmp_out;
    cmp->add_option("--out", cmp_out, "also write the comparison as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            vleto::ExperimentConfig cfg = vleto::load_config(config_path);
            if (has_seed) cfg.seed = seed_override;
            vleto::RunOptions options;
            options.export_prototypes = export_prototypes;
            options.dump_fisher = dump_fisher;
            options.dump_trace = dump_trace;
            options.quiet = quiet;
            vleto::RunArtifacts artifacts = vleto::run_experiment(cfg, options);
            if (!quiet)
                std::cout << "wrote " << artifacts.metrics_path << "\n";
        } else if (*gen) {
            vleto::write_synthetic_csv(out_path, g_samples, g_features, g_classes, g_separation,
                                       g_seed);
            std::cout << "wrote " << out_path << "\n";
        } else if (*cmp) {
            vleto::ComparisonTable table = vleto::compare_runs(metric_files);
            std::cout << table.render_text();
            if (!cmp_out.empty()) {
                std::ofstream out(cmp_out);
                if (!out) throw vleto::IngestError("compare: cannot open '" + cmp_out + "'");
                out << table.render_csv();
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
