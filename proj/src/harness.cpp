#include "fedsim/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim::harness {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError(key + ": cannot parse '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_number<std::size_t>(key, item));
    }
    return out;
}

// Data, split and partition streams; disjoint from the federation streams.
constexpr std::uint64_t kStreamSplit = 0x60000;
constexpr std::uint64_t kStreamPartition = 0x70000;

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "strategy") cfg.strategy = value;
    else if (key == "n_clients") cfg.n_clients = parse_number<int>(key, value);
    else if (key == "rounds") cfg.rounds = parse_number<int>(key, value);
    else if (key == "local_epochs") cfg.local_epochs = parse_number<int>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
    else if (key == "lr") cfg.lr = parse_number<double>(key, value);
    else if (key == "embedding_dim") cfg.embedding_dim = parse_number<std::size_t>(key, value);
    else if (key == "margin_m") cfg.margin_m = parse_number<double>(key, value);
    else if (key == "scale_s") cfg.scale_s = parse_number<double>(key, value);
    else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "csv_path") cfg.csv_path = value;
    else if (key == "synth_classes") cfg.synth_classes = parse_number<int>(key, value);
    else if (key == "synth_per_class") cfg.synth_per_class = parse_number<int>(key, value);
    else if (key == "synth_input_dim") cfg.synth_input_dim = parse_number<int>(key, value);
    else if (key == "synth_spread") cfg.synth_spread = parse_number<double>(key, value);
    else if (key == "test_fraction") cfg.test_fraction = parse_number<double>(key, value);
    else if (key == "hidden") cfg.hidden = parse_size_list(key, value);
    else if (key == "knn_k") cfg.knn_k = parse_number<int>(key, value);
    else if (key == "knn_k_means") cfg.knn_k_means = parse_number<int>(key, value);
    else if (key == "knn_metric") cfg.knn_metric = value;
    else if (key == "average_arcface_head") cfg.average_arcface_head = parse_bool(key, value);
    else if (key == "parallel_clients") cfg.parallel_clients = parse_bool(key, value);
    else if (key == "cost_w_bytes") cfg.cost_w_bytes = parse_number<std::uint64_t>(key, value);
    else if (key == "cost_d") cfg.cost_d = parse_number<std::uint64_t>(key, value);
    else if (key == "cost_n_clients") cfg.cost_n_clients = parse_number<std::uint64_t>(key, value);
    else if (key == "cost_n_classes") cfg.cost_n_classes = parse_number<std::uint64_t>(key, value);
    else if (key == "cost_n_samples") cfg.cost_n_samples = parse_number<std::uint64_t>(key, value);
    else if (key == "out") cfg.out = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::vector<int> selected_strategies(const ExperimentConfig& cfg) {
    if (cfg.strategy == "all") return {1, 2, 3, 4, 5, 6, 0};
    if (cfg.strategy == "non-fed") return {0};
    int id = 0;
    const std::string& s = cfg.strategy;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
    if (ec != std::errc{} || ptr != s.data() + s.size() || id < 0 || id > 6) {
        throw ConfigError("strategy: expected all, non-fed or 0..6, got '" + s + "'");
    }
    return {id};
}

void validate(const ExperimentConfig& cfg) {
    selected_strategies(cfg);
    if (cfg.n_clients < 1) throw ConfigError("n_clients: must be >= 1");
    if (cfg.rounds < 0) throw ConfigError("rounds: must be >= 0");
    if (cfg.local_epochs < 0) throw ConfigError("local_epochs: must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (!(cfg.lr >= 0.0)) throw ConfigError("lr: must be >= 0");
    if (cfg.embedding_dim == 0) throw ConfigError("embedding_dim: must be >= 1");
    if (!(cfg.alpha > 0.0)) throw ConfigError("alpha: must be > 0");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
        throw ConfigError("test_fraction: must lie in (0, 1)");
    }
    if (cfg.dataset != "synthetic" && cfg.dataset != "csv") {
        throw ConfigError("dataset: expected synthetic or csv");
    }
    if (cfg.dataset == "csv" && cfg.csv_path.empty()) {
        throw ConfigError("csv_path: required when dataset = csv");
    }
    if (cfg.dataset == "synthetic" &&
        (cfg.synth_classes < 1 || cfg.synth_per_class < 2 || cfg.synth_input_dim < 1)) {
        throw ConfigError("synthetic dataset needs >= 1 class, >= 2 samples/class, dim >= 1");
    }
    if (cfg.synth_spread < 0.0) throw ConfigError("synth_spread: must be >= 0");
    if (cfg.knn_k < 1 || cfg.knn_k_means < 1) throw ConfigError("knn k values must be >= 1");
    retrieval::metric_from_string(cfg.knn_metric);
    losses::MarginConfig{cfg.margin_m, cfg.scale_s}.validate();
}

std::vector<fed::RoundMetrics> run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);

    data::Dataset dataset = cfg.dataset == "csv"
                                ? data::load_csv(cfg.csv_path)
                                : data::synth_generate(cfg.synth_classes, cfg.synth_per_class,
                                                       cfg.synth_input_dim, cfg.synth_spread,
                                                       cfg.seed);
    data::SplitResult split =
        data::split(dataset, cfg.test_fraction, mix_seed(cfg.seed, kStreamSplit));
    data::Partition partition = data::dirichlet_partition(
        split.train, cfg.n_clients, cfg.alpha, mix_seed(cfg.seed, kStreamPartition));

    fed::FederationConfig fcfg;
    fcfg.n_clients = cfg.n_clients;
    fcfg.rounds = cfg.rounds;
    fcfg.local_epochs = cfg.local_epochs;
    fcfg.batch_size = cfg.batch_size;
    fcfg.lr = cfg.lr;
    fcfg.margin = losses::MarginConfig{cfg.margin_m, cfg.scale_s};
    fcfg.hidden = cfg.hidden;
    fcfg.embedding_dim = cfg.embedding_dim;
    fcfg.knn_k_full = cfg.knn_k;
    fcfg.knn_k_means = cfg.knn_k_means;
    fcfg.knn_metric = retrieval::metric_from_string(cfg.knn_metric);
    fcfg.average_arcface_head = cfg.average_arcface_head;
    fcfg.parallel_clients = cfg.parallel_clients;
    fcfg.seed = cfg.seed;

    std::vector<fed::RoundMetrics> all;
    for (int id : selected_strategies(cfg)) {
        fed::Federation federation(fed::strategy_from_int(id), split.train, split.val, partition,
                                   fcfg);
        fed::RoundMetrics initial;
        initial.round = 0;
        initial.strategy = id;
        initial.accuracy = federation.evaluate();
        all.push_back(initial);
        for (int r = 0; r < cfg.rounds; ++r) all.push_back(federation.run_round());
    }
    return all;
}

std::string metrics_to_csv(std::span<const fed::RoundMetrics> metrics) {
    std::string out = "round,strategy,accuracy,bytes_symbolic,bytes_measured,wall_ms\n";
    char buf[256];
    for (const auto& row : metrics) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%llu,%llu,%.3f\n", row.round, row.strategy,
                      row.accuracy, static_cast<unsigned long long>(row.bytes_symbolic),
                      static_cast<unsigned long long>(row.bytes_measured), row.wall_ms);
        out += buf;
    }
    return out;
}

void write_metrics(std::span<const fed::RoundMetrics> metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metrics to " + path);
    out << metrics_to_csv(metrics);
    if (!out) throw Error("write failed for " + path);
}

std::string cost_table(const cost::CostModel& model) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9s %-36s %20s\n", "strategy", "formula", "bytes");
    out += buf;
    for (int id = 1; id <= 6; ++id) {
        std::snprintf(buf, sizeof buf, "%-9d %-36s %20llu\n", id, cost::formula(id).c_str(),
                      static_cast<unsigned long long>(cost::round_cost(id, model)));
        out += buf;
    }
    return out;
}

cost::CostModel preset_cost_model(const std::string& name) {
    cost::CostModel model;
    model.w_bytes = 44993804;
    model.d = 128;
    if (name == "ucm") {
        model.n_clients = 10;
        model.n_classes = 21;
        model.n_samples = 1470;
    } else if (name == "aid") {
        model.n_clients = 20;
        model.n_classes = 30;
        model.n_samples = 7000;
    } else {
        throw ConfigError("unknown cost preset '" + name + "' (expected ucm or aid)");
    }
    return model;
}

cost::CostModel cost_model_from_config(const ExperimentConfig& cfg) {
    cost::CostModel model;
    model.w_bytes = cfg.cost_w_bytes;
    model.d = cfg.cost_d;
    model.n_clients = cfg.cost_n_clients;
    model.n_classes = cfg.cost_n_classes;
    model.n_samples = cfg.cost_n_samples;
    return model;
}

}  // namespace fedsim::harness
