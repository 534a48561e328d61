#include "fedsim/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/wire.hpp"

namespace fedsim::fed {

namespace {

// Stream offsets keep the per-purpose RNG streams disjoint.
constexpr std::uint64_t kStreamClientInit = 0x10000;
constexpr std::uint64_t kStreamHeadInit = 0x20000;
constexpr std::uint64_t kStreamTrain = 0x30000;
constexpr std::uint64_t kStreamSharedInit = 0x40000;
constexpr std::uint64_t kStreamServerInit = 0x50000;

std::vector<int> labels_of(const data::Dataset& ds, std::span<const int> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(ds.labels[static_cast<std::size_t>(i)]);
    return out;
}

// Cosine similarity that tolerates zero vectors; evaluation must not abort on
// a dead embedding.
double safe_cosine(std::span<const double> a, std::span<const double> b) {
    const double denom = norm2(a) * norm2(b);
    if (denom == 0.0) return 0.0;
    return dot(a, b) / denom;
}

std::size_t argmax_row(const Matrix& m, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols; ++j) {
        if (m(row, j) > m(row, best)) best = j;
    }
    return best;
}

double plain_head_accuracy(const nn::ModelParams& model, const data::Dataset& val) {
    Matrix emb = nn::forward(model.backbone, val.inputs);
    Matrix logits = matmul_nt(emb, model.head.anchors);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        for (std::size_t j = 0; j < logits.cols; ++j) logits(i, j) += model.head_bias[j];
        if (argmax_row(logits, i) == static_cast<std::size_t>(val.labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(val.size());
}

double cosine_head_accuracy(const nn::ModelParams& model, const data::Dataset& val) {
    Matrix emb = nn::forward(model.backbone, val.inputs);
    const Matrix& anchors = model.head.anchors;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < emb.rows; ++i) {
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t j = 0; j < anchors.rows; ++j) {
            const double score = safe_cosine(emb.row(i), anchors.row(j));
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best == static_cast<std::size_t>(val.labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(val.size());
}

double knn_accuracy(const nn::ModelParams& model, const retrieval::FeatureBank& bank,
                    const data::Dataset& val, int k) {
    Matrix emb = nn::forward(model.backbone, val.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < emb.rows; ++i) {
        std::vector<double> query(emb.row(i).begin(), emb.row(i).end());
        if (retrieval::knn_predict(bank, query, k) == val.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(val.size());
}

}  // namespace

Strategy strategy_from_int(int id) {
    if (id < 0 || id > 6) throw ConfigError("unknown strategy " + std::to_string(id));
    return static_cast<Strategy>(id);
}

bool has_global_model(Strategy s) {
    return s == Strategy::FedAvg || s == Strategy::ModelAndFeatures ||
           s == Strategy::RetrievalFull || s == Strategy::RetrievalMeans;
}

void client_local_train(ClientState& state, const data::Dataset& train, const TrainOptions& opts,
                        Rng& rng) {
    if (opts.epochs < 0) throw ConfigError("local_epochs must be nonnegative");
    if (opts.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (state.shard.empty() || opts.epochs == 0) return;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<int> order = state.shard;
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
            const std::span<const int> batch_idx(order.data() + start, stop - start);
            const Matrix inputs = data::gather_rows(train.inputs, batch_idx);
            const std::vector<int> labels = labels_of(train, batch_idx);

            nn::ForwardCache cache;
            const Matrix emb = nn::forward(state.model.backbone, inputs, &cache);
            losses::LossEval eval = losses::evaluate_loss(
                opts.loss, emb, state.model.head, state.model.head_bias, labels, opts.margin);
            if (!std::isfinite(eval.value)) {
                throw NumericError("training loss is not finite: " + std::to_string(eval.value));
            }
            nn::ModelGrads grads;
            grads.backbone = nn::backward(state.model.backbone, cache, eval.d_embeddings);
            if (opts.train_head) {
                grads.head.anchors = std::move(eval.d_anchors);
                grads.head_bias = std::move(eval.d_bias);
            } else {
                grads.head.anchors =
                    Matrix(state.model.head.anchors.rows, state.model.head.anchors.cols);
                grads.head_bias = Vector(state.model.head_bias.size(), 0.0);
            }
            nn::adam_step(state.model, grads, state.adam, opts.lr);
        }
    }
}

nn::ModelParams average_weights(std::span<const nn::ModelParams> models) {
    if (models.empty()) throw AggregationError("average_weights: no models");
    for (const auto& m : models) {
        if (!m.same_shape(models.front())) {
            throw AggregationError("average_weights: model shapes disagree");
        }
    }
    if (models.size() == 1) return models.front();

    nn::ModelParams avg = models.front();
    std::vector<Vector*> out;
    nn::visit_tensors(avg, [&](Vector& t) { out.push_back(&t); });
    std::vector<std::vector<const Vector*>> in(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        nn::visit_tensors(models[i], [&](const Vector& t) { in[i].push_back(&t); });
    }
    const double n = static_cast<double>(models.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        Vector& dst = *out[t];
        for (std::size_t s = 0; s < dst.size(); ++s) {
            const double base = (*in[0][t])[s];
            double delta = 0.0;
            for (std::size_t i = 1; i < models.size(); ++i) delta += (*in[i][t])[s] - base;
            dst[s] = base + delta / n;
        }
    }
    return avg;
}

ClassMeanFeatures per_class_mean_features(const ClientState& state, const data::Dataset& train) {
    ClassMeanFeatures out;
    out.dim = static_cast<std::uint16_t>(state.model.backbone.embedding_dim());
    if (state.shard.empty()) return out;

    const Matrix inputs = data::gather_rows(train.inputs, state.shard);
    const Matrix emb = nn::forward(state.model.backbone, inputs);
    for (std::size_t r = 0; r < emb.rows; ++r) {
        const int label = train.labels[static_cast<std::size_t>(state.shard[r])];
        auto& entry = out.by_class[label];
        if (entry.mean.empty()) entry.mean.assign(emb.cols, 0.0);
        for (std::size_t c = 0; c < emb.cols; ++c) entry.mean[c] += emb(r, c);
        entry.count += 1;
    }
    for (auto& [label, entry] : out.by_class) {
        for (double& x : entry.mean) x /= static_cast<double>(entry.count);
    }
    return out;
}

ClassMeanFeatures aggregate_class_means(std::span<const ClassMeanFeatures> msgs) {
    if (msgs.empty()) throw AggregationError("aggregate_class_means: no messages");
    ClassMeanFeatures out;
    out.dim = msgs.front().dim;
    for (const auto& msg : msgs) {
        if (msg.dim != out.dim) throw AggregationError("aggregate_class_means: dim mismatch");
        for (const auto& [label, entry] : msg.by_class) {
            if (entry.mean.size() != out.dim) {
                throw AggregationError("aggregate_class_means: entry dim mismatch");
            }
            auto& agg = out.by_class[label];
            if (agg.mean.empty()) agg.mean.assign(out.dim, 0.0);
            for (std::size_t c = 0; c < out.dim; ++c) agg.mean[c] += entry.mean[c];
            agg.count += 1;  // number of reporting clients
        }
    }
    for (auto& [label, entry] : out.by_class) {
        for (double& x : entry.mean) x /= static_cast<double>(entry.count);
    }
    return out;
}

void assign_head(ClientState& state, const ClassMeanFeatures& means) {
    Matrix& anchors = state.model.head.anchors;
    if (!means.by_class.empty() && means.dim != anchors.cols) {
        throw ShapeError("assign_head: feature dim does not match head");
    }
    for (const auto& [label, entry] : means.by_class) {
        if (label < 0 || static_cast<std::size_t>(label) >= anchors.rows) {
            throw LabelError("assign_head: class " + std::to_string(label) + " out of range");
        }
        const Vector unit = nn::l2_normalize(entry.mean);
        for (std::size_t c = 0; c < anchors.cols; ++c) {
            anchors(static_cast<std::size_t>(label), c) = unit[c];
        }
    }
}

nn::BackboneParams regularize_backbone(const nn::BackboneParams& m0,
                                       const nn::BackboneParams& mtilde, int n_clients) {
    if (n_clients < 1) throw ConfigError("regularize_backbone: n_clients must be >= 1");
    if (!m0.same_shape(mtilde)) throw ShapeError("regularize_backbone: shapes disagree");
    if (n_clients == 1) return mtilde;

    nn::BackboneParams out = m0;
    const double n = static_cast<double>(n_clients);
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        auto blend = [n](Vector& dst, const Vector& base, const Vector& updated) {
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = base[i] + (updated[i] - base[i]) / n;
            }
        };
        blend(out.layers[l].weight.data, m0.layers[l].weight.data, mtilde.layers[l].weight.data);
        blend(out.layers[l].bias, m0.layers[l].bias, mtilde.layers[l].bias);
    }
    return out;
}

double evaluate_accuracy(Strategy strategy, const ServerState& server,
                         std::span<const ClientState> clients, const data::Dataset& val,
                         const std::vector<retrieval::FeatureBank>* banks, int knn_k_full,
                         int knn_k_means) {
    if (val.size() == 0) throw ConfigError("evaluate: empty validation set");
    if (strategy == Strategy::FedAvg) {
        if (!server.global_model) throw ConfigError("evaluate: server has no global model");
        return plain_head_accuracy(*server.global_model, val);
    }
    if (clients.empty()) throw ConfigError("evaluate: no clients");

    const bool knn_ready = banks && banks->size() == clients.size() &&
                           (strategy == Strategy::RetrievalFull ||
                            strategy == Strategy::RetrievalMeans);
    double total = 0.0;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const ClientState& client = clients[i];
        if (strategy == Strategy::NonFed) {
            total += plain_head_accuracy(client.model, val);
        } else if (knn_ready) {
            // k differs between the all-features and per-class-means banks;
            // the bank size bounds it either way.
            const auto want =
                strategy == Strategy::RetrievalFull ? knn_k_full : knn_k_means;
            const int k = static_cast<int>(std::min<std::size_t>(
                static_cast<std::size_t>(std::max(want, 1)), (*banks)[i].vectors.rows));
            total += knn_accuracy(client.model, (*banks)[i], val, k);
        } else {
            total += cosine_head_accuracy(client.model, val);
        }
    }
    return total / static_cast<double>(clients.size());
}

Federation::Federation(Strategy strategy, const data::Dataset& train, const data::Dataset& val,
                       const data::Partition& partition, const FederationConfig& cfg)
    : strategy_(strategy), train_(train), val_(val), cfg_(cfg) {
    if (cfg.n_clients < 1) throw ConfigError("n_clients must be >= 1");
    if (partition.shards.size() != static_cast<std::size_t>(cfg.n_clients)) {
        throw ConfigError("partition does not match n_clients");
    }
    if (train.n_classes < 1) throw ConfigError("training set has no classes");
    cfg_.margin.validate();

    std::vector<std::size_t> arch;
    arch.push_back(train.inputs.cols);
    for (std::size_t h : cfg_.hidden) arch.push_back(h);
    arch.push_back(cfg_.embedding_dim);

    const auto n_classes = static_cast<std::size_t>(train.n_classes);
    const bool softmax_head = strategy_ == Strategy::NonFed || strategy_ == Strategy::FedAvg;
    const nn::BackboneParams shared =
        nn::init_backbone(mix_seed(cfg_.seed, kStreamSharedInit), arch);

    clients_.reserve(static_cast<std::size_t>(cfg_.n_clients));
    for (int i = 0; i < cfg_.n_clients; ++i) {
        ClientState client;
        client.id = i;
        if (strategy_ == Strategy::FeatureAvgReg) {
            client.model.backbone = shared;
            client.m0 = shared;
        } else {
            client.model.backbone = nn::init_backbone(
                mix_seed(cfg_.seed, kStreamClientInit, static_cast<std::uint64_t>(i)), arch);
        }
        Rng head_rng(mix_seed(cfg_.seed, kStreamHeadInit, static_cast<std::uint64_t>(i)));
        client.model.head = softmax_head
                                ? nn::init_softmax_head(head_rng, n_classes, cfg_.embedding_dim)
                                : nn::init_cosine_head(head_rng, n_classes, cfg_.embedding_dim);
        client.model.head_bias = Vector(n_classes, 0.0);
        client.adam = nn::adam_init(client.model);
        client.shard = partition.shards[static_cast<std::size_t>(i)];
        clients_.push_back(std::move(client));
    }

    server_.strategy = strategy_;
    server_.round = 0;
    if (has_global_model(strategy_)) {
        nn::ModelParams global;
        global.backbone = nn::init_backbone(mix_seed(cfg_.seed, kStreamServerInit), arch);
        Rng head_rng(mix_seed(cfg_.seed, kStreamServerInit, 1));
        global.head = softmax_head
                          ? nn::init_softmax_head(head_rng, n_classes, cfg_.embedding_dim)
                          : nn::init_cosine_head(head_rng, n_classes, cfg_.embedding_dim);
        global.head_bias = Vector(n_classes, 0.0);
        server_.global_model = std::move(global);
    }
}

WeightSnapshot Federation::snapshot(const nn::ModelParams& model) const {
    WeightSnapshot snap;
    snap.backbone = model.backbone;
    snap.head = model.head;
    if (strategy_ == Strategy::NonFed || strategy_ == Strategy::FedAvg) {
        snap.head_bias = model.head_bias;
    }
    return snap;
}

void Federation::train_all_clients() {
    TrainOptions opts;
    opts.epochs = cfg_.local_epochs;
    opts.batch_size = cfg_.batch_size;
    opts.lr = cfg_.lr;
    opts.margin = cfg_.margin;
    switch (strategy_) {
        case Strategy::NonFed:
        case Strategy::FedAvg:
            opts.loss = losses::LossKind::SoftmaxCe;
            opts.train_head = true;
            break;
        case Strategy::FeatureAvg:
        case Strategy::FeatureAvgReg:
            // Head rows are server-assigned anchors, frozen locally.
            opts.loss = losses::LossKind::ArcFace;
            opts.train_head = false;
            break;
        default:
            opts.loss = losses::LossKind::ArcFace;
            opts.train_head = true;
            break;
    }

    const int round = server_.round;
    auto train_one = [this, &opts, round](std::size_t i) {
        Rng rng(mix_seed(cfg_.seed, kStreamTrain + static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(round)));
        client_local_train(clients_[i], train_, opts, rng);
    };

    if (cfg_.parallel_clients && clients_.size() > 1) {
        std::vector<std::future<void>> jobs;
        jobs.reserve(clients_.size());
        for (std::size_t i = 0; i < clients_.size(); ++i) {
            jobs.push_back(std::async(std::launch::async, train_one, i));
        }
        for (auto& job : jobs) job.get();  // joined in client order
    } else {
        for (std::size_t i = 0; i < clients_.size(); ++i) train_one(i);
    }
}

void Federation::weight_sync_phase(std::uint64_t& measured) {
    std::vector<nn::ModelParams> models;
    models.reserve(clients_.size());
    for (const ClientState& client : clients_) {
        measured += wire::measure(snapshot(client.model)).payload_bytes;
        models.push_back(client.model);
    }
    nn::ModelParams avg = average_weights(models);
    if (!cfg_.average_arcface_head && strategy_ != Strategy::FedAvg) {
        // Anchors excluded from the average; each client keeps its own until
        // assign_head replaces them later in the round.
        avg.head = server_.global_model->head;
        const std::uint64_t down = wire::measure(snapshot(avg)).payload_bytes;
        for (ClientState& client : clients_) {
            measured += down;
            nn::HeadParams own = client.model.head;
            client.model = avg;
            client.model.head = std::move(own);
        }
        server_.global_model->backbone = avg.backbone;
        return;
    }
    server_.global_model = avg;
    const std::uint64_t down = wire::measure(snapshot(avg)).payload_bytes;
    for (ClientState& client : clients_) {
        measured += down;
        client.model = avg;
    }
}

void Federation::feature_sync_phase(std::uint64_t& measured) {
    std::vector<ClassMeanFeatures> reports;
    reports.reserve(clients_.size());
    for (const ClientState& client : clients_) {
        ClassMeanFeatures cmf = per_class_mean_features(client, train_);
        measured += wire::measure(cmf).payload_bytes;
        reports.push_back(std::move(cmf));
    }
    const ClassMeanFeatures agg = aggregate_class_means(reports);
    const std::uint64_t down = wire::measure(agg).payload_bytes;
    for (ClientState& client : clients_) {
        measured += down;
        assign_head(client, agg);
    }
}

void Federation::retrieval_prep(std::uint64_t& measured) {
    const bool full = strategy_ == Strategy::RetrievalFull;
    std::vector<RoundMessage> outgoing;
    outgoing.reserve(clients_.size());
    for (const ClientState& client : clients_) {
        if (full) {
            LabeledFeatureSet fs;
            fs.dim = static_cast<std::uint16_t>(cfg_.embedding_dim);
            if (!client.shard.empty()) {
                const Matrix inputs = data::gather_rows(train_.inputs, client.shard);
                const Matrix emb = nn::forward(client.model.backbone, inputs);
                fs.items.reserve(emb.rows);
                for (std::size_t r = 0; r < emb.rows; ++r) {
                    LabeledFeature item;
                    item.feature.assign(emb.row(r).begin(), emb.row(r).end());
                    item.label = train_.labels[static_cast<std::size_t>(client.shard[r])];
                    fs.items.push_back(std::move(item));
                }
            }
            outgoing.emplace_back(std::move(fs));
        } else {
            outgoing.emplace_back(per_class_mean_features(client, train_));
        }
    }

    // The server relays every sender's message to every client; each
    // (sender, receiver) pair costs one up and one down hop.
    for (std::size_t receiver = 0; receiver < clients_.size(); ++receiver) {
        for (const RoundMessage& msg : outgoing) {
            measured += 2 * wire::measure(msg).payload_bytes;
        }
    }

    // All clients receive the same union; senders are merged in id order.
    Matrix vectors;
    std::vector<int> labels;
    std::size_t total = 0;
    if (full) {
        for (const auto& msg : outgoing) total += std::get<LabeledFeatureSet>(msg).items.size();
    } else {
        for (const auto& msg : outgoing) total += std::get<ClassMeanFeatures>(msg).by_class.size();
    }
    if (total == 0) throw ConfigError("retrieval prep: no features to fit");
    vectors = Matrix(total, cfg_.embedding_dim);
    labels.reserve(total);
    std::size_t row = 0;
    for (const RoundMessage& msg : outgoing) {
        if (full) {
            for (const auto& item : std::get<LabeledFeatureSet>(msg).items) {
                for (std::size_t c = 0; c < item.feature.size(); ++c) {
                    vectors(row, c) = item.feature[c];
                }
                labels.push_back(item.label);
                ++row;
            }
        } else {
            for (const auto& [label, entry] : std::get<ClassMeanFeatures>(msg).by_class) {
                for (std::size_t c = 0; c < entry.mean.size(); ++c) {
                    vectors(row, c) = entry.mean[c];
                }
                labels.push_back(label);
                ++row;
            }
        }
    }
    banks_.clear();
    banks_.reserve(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
        banks_.push_back(retrieval::knn_fit(vectors, labels, cfg_.knn_metric));
    }
}

RoundMetrics Federation::run_round() {
    const auto start = std::chrono::steady_clock::now();
    server_.round += 1;
    std::uint64_t measured = 0;

    train_all_clients();
    switch (strategy_) {
        case Strategy::NonFed:
            break;
        case Strategy::FedAvg:
            weight_sync_phase(measured);
            break;
        case Strategy::FeatureAvg:
            feature_sync_phase(measured);
            break;
        case Strategy::FeatureAvgReg:
            feature_sync_phase(measured);
            for (ClientState& client : clients_) {
                client.model.backbone =
                    regularize_backbone(*client.m0, client.model.backbone, cfg_.n_clients);
            }
            break;
        case Strategy::ModelAndFeatures:
            weight_sync_phase(measured);
            feature_sync_phase(measured);
            break;
        case Strategy::RetrievalFull:
        case Strategy::RetrievalMeans:
            weight_sync_phase(measured);
            feature_sync_phase(measured);
            if (server_.round == cfg_.rounds) retrieval_prep(measured);
            break;
    }

    RoundMetrics metrics;
    metrics.round = server_.round;
    metrics.strategy = static_cast<int>(strategy_);
    metrics.accuracy = evaluate();
    metrics.bytes_measured = measured;
    metrics.bytes_symbolic = symbolic_round_bytes(server_.round);
    metrics.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return metrics;
}

double Federation::evaluate() const {
    return evaluate_accuracy(strategy_, server_, clients_, val_, &banks_, cfg_.knn_k_full,
                             cfg_.knn_k_means);
}

cost::CostModel Federation::cost_model() const {
    cost::CostModel model;
    model.w_bytes = wire::measure(snapshot(clients_.front().model)).payload_bytes;
    model.d = cfg_.embedding_dim;
    model.n_clients = static_cast<std::uint64_t>(cfg_.n_clients);
    model.n_classes = static_cast<std::uint64_t>(train_.n_classes);
    model.n_samples = train_.size();
    return model;
}

std::uint64_t Federation::symbolic_round_bytes(int round_index) const {
    const cost::CostModel model = cost_model();
    const bool final_round = round_index == cfg_.rounds;
    switch (strategy_) {
        case Strategy::NonFed:
            return 0;
        case Strategy::FedAvg:
            return cost::round_cost(1, model);
        case Strategy::FeatureAvg:
        case Strategy::FeatureAvgReg:
            return cost::round_cost(2, model);
        case Strategy::ModelAndFeatures:
            return cost::round_cost(4, model);
        case Strategy::RetrievalFull:
        case Strategy::RetrievalMeans: {
            // Training rounds cost what strategy 4 costs; the retrieval
            // exchange lands on the final round.
            std::uint64_t bytes = cost::round_cost(4, model);
            if (final_round) {
                const int id = strategy_ == Strategy::RetrievalFull ? 5 : 6;
                bytes += cost::round_cost(id, model) - cost::round_cost(1, model);
            }
            return bytes;
        }
    }
    throw ConfigError("unknown strategy");
}

}  // namespace fedsim::fed
