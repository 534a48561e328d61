// fedsim command line: `run` executes federated training experiments and
// writes per-round metrics; `cost` prints the per-strategy communication
// byte table.

#include <cstdio>
#include <exception>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/harness.hpp"

namespace {

int run_command(const std::string& config_path,
                const std::map<std::string, std::string>& overrides) {
    fedsim::harness::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = fedsim::harness::parse_config_file(config_path);
    for (const auto& [key, value] : overrides) {
        fedsim::harness::apply_override(cfg, key, value);
    }
    const auto metrics = fedsim::harness::run_experiment(cfg);
    if (!cfg.out.empty()) {
        fedsim::harness::write_metrics(metrics, cfg.out);
        std::printf("wrote %zu metric rows to %s\n", metrics.size(), cfg.out.c_str());
    } else {
        std::fputs(fedsim::harness::metrics_to_csv(metrics).c_str(), stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated-learning communication-strategy simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an experiment and emit per-round metrics");
    std::string config_path;
    run->add_option("--config", config_path, "Flat key = value config file");
    // Every config key is also a flag of the same name.
    std::map<std::string, std::string> overrides;
    for (const char* key :
         {"strategy", "n_clients", "rounds", "local_epochs", "batch_size", "lr", "embedding_dim",
          "margin_m", "scale_s", "alpha", "seed", "dataset", "csv_path", "synth_classes",
          "synth_per_class", "synth_input_dim", "synth_spread", "test_fraction", "hidden",
          "knn_k", "knn_k_means", "knn_metric", "average_arcface_head", "parallel_clients",
          "cost_w_bytes", "cost_d", "cost_n_clients", "cost_n_classes", "cost_n_samples",
          "out"}) {
        run->add_option_function<std::string>(
            std::string("--") + key,
            [&overrides, key](const std::string& value) { overrides[key] = value; });
    }

    auto* cost = app.add_subcommand("cost", "Print the per-strategy communication cost table");
    std::string preset;
    unsigned long long w_bytes = 0, d = 0, clients = 0, classes = 0, samples = 0;
    cost->add_option("--preset", preset, "ucm or aid parameter set");
    cost->add_option("--w-bytes", w_bytes, "serialized model size in bytes");
    cost->add_option("--d", d, "embedding dimension");
    cost->add_option("--clients", clients, "number of clients");
    cost->add_option("--classes", classes, "number of classes");
    cost->add_option("--samples", samples, "number of training samples");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_command(config_path, overrides);

        fedsim::cost::CostModel model;
        if (!preset.empty()) {
            model = fedsim::harness::preset_cost_model(preset);
        }
        if (w_bytes) model.w_bytes = w_bytes;
        if (d) model.d = d;
        if (clients) model.n_clients = clients;
        if (classes) model.n_classes = classes;
        if (samples) model.n_samples = samples;
        model.validate();
        std::fputs(fedsim::harness::cost_table(model).c_str(), stdout);
        return 0;
    } catch (const fedsim::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
}
