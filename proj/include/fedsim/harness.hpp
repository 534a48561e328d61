#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/cost.hpp"
#include "fedsim/federation.hpp"

namespace fedsim::harness {

// Full experiment manifest. Defaults follow the reference setup: t=16 rounds,
// 1 local epoch, batch size 16, lr 1e-4, margin 0.2, scale 20, test fraction
// 0.3. Every key of the flat config file maps to one field here.
struct ExperimentConfig {
    std::string strategy = "all";  // "all", "non-fed", or "0".."6"
    int n_clients = 10;
    int rounds = 16;
    int local_epochs = 1;
    int batch_size = 16;
    double lr = 1e-4;
    std::size_t embedding_dim = 16;
    double margin_m = 0.2;
    double scale_s = 20.0;
    double alpha = 0.5;
    std::uint64_t seed = 42;

    std::string dataset = "synthetic";  // "synthetic" | "csv"
    std::string csv_path;
    int synth_classes = 10;
    int synth_per_class = 100;
    int synth_input_dim = 8;
    double synth_spread = 0.25;
    double test_fraction = 0.3;

    std::vector<std::size_t> hidden = {64, 32};
    int knn_k = 5;        // strategy 5 banks
    int knn_k_means = 1;  // strategy 6 banks
    std::string knn_metric = "cosine";
    bool average_arcface_head = true;
    bool parallel_clients = false;

    // Cost-model inputs for the `cost` command. Run metrics always derive
    // their symbolic column from the actual model being exchanged.
    std::uint64_t cost_w_bytes = 0;
    std::uint64_t cost_d = 128;
    std::uint64_t cost_n_clients = 10;
    std::uint64_t cost_n_classes = 21;
    std::uint64_t cost_n_samples = 1470;

    std::string out;  // metrics CSV path; empty = do not write
};

// Flat key = value document; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void validate(const ExperimentConfig& cfg);

// Strategy ids selected by cfg.strategy: {0..6} for "all", a single id
// otherwise ("non-fed" = 0).
std::vector<int> selected_strategies(const ExperimentConfig& cfg);

// Runs the full pipeline: data -> split -> partition -> t rounds per selected
// strategy. Every stream sees the identical split and partition. Each stream
// starts with a round-0 entry holding the pre-training evaluation.
std::vector<fed::RoundMetrics> run_experiment(const ExperimentConfig& cfg);

// CSV with header round,strategy,accuracy,bytes_symbolic,bytes_measured,wall_ms.
void write_metrics(std::span<const fed::RoundMetrics> metrics, const std::string& path);
std::string metrics_to_csv(std::span<const fed::RoundMetrics> metrics);

// One row per strategy: id, formula, byte count.
std::string cost_table(const cost::CostModel& model);

// "ucm" or "aid" parameter sets (d=128, w=44,993,804 bytes).
cost::CostModel preset_cost_model(const std::string& name);

cost::CostModel cost_model_from_config(const ExperimentConfig& cfg);

}  // namespace fedsim::harness
