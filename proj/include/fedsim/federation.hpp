#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/cost.hpp"
#include "fedsim/data.hpp"
#include "fedsim/losses.hpp"
#include "fedsim/messages.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/retrieval.hpp"

namespace fedsim::fed {

// Communication strategies. 0 is the no-communication reference where
// clients train independently.
enum class Strategy {
    NonFed = 0,
    FedAvg = 1,            // full-weight averaging
    FeatureAvg = 2,        // per-class mean features only
    FeatureAvgReg = 3,     // strategy 2 plus backbone regularization toward M0
    ModelAndFeatures = 4,  // strategy 1 then strategy 2 in the same round
    RetrievalFull = 5,     // strategy 4 training, kNN inference on all features
    RetrievalMeans = 6,    // strategy 4 training, kNN inference on per-class means
};

Strategy strategy_from_int(int id);
bool has_global_model(Strategy s);

struct ClientState {
    int id = 0;
    nn::ModelParams model;
    nn::AdamState adam;
    std::vector<int> shard;                 // indices into the training set
    std::optional<nn::BackboneParams> m0;   // shared initial backbone, strategy 3 only
};

struct ServerState {
    Strategy strategy = Strategy::FedAvg;
    std::optional<nn::ModelParams> global_model;  // strategies 1, 4, 5, 6
    int round = 0;
};

struct TrainOptions {
    int epochs = 1;
    int batch_size = 16;
    double lr = 1e-4;
    losses::LossKind loss = losses::LossKind::ArcFace;
    losses::MarginConfig margin;
    bool train_head = false;  // anchors (and bias for the softmax head)
};

// k epochs over the client's shard in shuffled minibatches. An empty shard or
// zero epochs leaves the state untouched.
void client_local_train(ClientState& state, const data::Dataset& train, const TrainOptions& opts,
                        Rng& rng);

// Unweighted elementwise mean. Inputs must be passed in a fixed (client id)
// order; the sum runs in list order so results are bitwise reproducible.
// Identical inputs average to themselves bitwise.
nn::ModelParams average_weights(std::span<const nn::ModelParams> models);

// Mean backbone embedding per class over the client's shard; absent classes
// are omitted. Counts carry the shard sample counts.
ClassMeanFeatures per_class_mean_features(const ClientState& state, const data::Dataset& train);

// Per-class unweighted mean over the clients that reported the class; the
// count becomes the number of reporting clients.
ClassMeanFeatures aggregate_class_means(std::span<const ClassMeanFeatures> msgs);

// Head rows for classes present in the means are replaced by the normalized
// mean; other rows keep their previous anchors.
void assign_head(ClientState& state, const ClassMeanFeatures& means);

// M = ((n_clients - 1) * M0 + Mtilde) / n_clients, computed in delta form so
// that Mtilde == M0 yields M0 bitwise.
nn::BackboneParams regularize_backbone(const nn::BackboneParams& m0,
                                       const nn::BackboneParams& mtilde, int n_clients);

struct FederationConfig {
    int n_clients = 10;
    int rounds = 16;
    int local_epochs = 1;
    int batch_size = 16;
    double lr = 1e-4;
    losses::MarginConfig margin;
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t embedding_dim = 16;
    int knn_k_full = 5;          // strategy 5 banks
    int knn_k_means = 1;         // strategy 6 banks
    retrieval::Metric knn_metric = retrieval::Metric::Cosine;
    bool average_arcface_head = true;  // include anchors in the strategy-4 weight average
    bool parallel_clients = false;
    std::uint64_t seed = 42;
};

struct RoundMetrics {
    int round = 0;
    int strategy = 0;
    double accuracy = 0.0;
    std::uint64_t bytes_symbolic = 0;
    std::uint64_t bytes_measured = 0;
    double wall_ms = 0.0;  // informational, excluded from determinism guarantees
};

// Accuracy on the validation set under the strategy's decision rule:
// softmax argmax on the server model (1), per-client cosine argmax averaged
// (2-4, and 5/6 before banks exist), per-client kNN averaged (5/6 with
// banks), per-client softmax argmax averaged (non-fed).
double evaluate_accuracy(Strategy strategy, const ServerState& server,
                         std::span<const ClientState> clients, const data::Dataset& val,
                         const std::vector<retrieval::FeatureBank>* banks, int knn_k_full = 5,
                         int knn_k_means = 1);

// One strategy stream over a fixed split and partition. Owns client and
// server state; the harness drives it round by round.
class Federation {
public:
    Federation(Strategy strategy, const data::Dataset& train, const data::Dataset& val,
               const data::Partition& partition, const FederationConfig& cfg);

    // Executes the next communication round and evaluates. The retrieval
    // preparation of strategies 5/6 runs inside the final round, and its
    // bytes land on that round's metrics.
    RoundMetrics run_round();

    double evaluate() const;
    int round() const { return server_.round; }
    const std::vector<ClientState>& clients() const { return clients_; }
    const ServerState& server() const { return server_; }
    const std::vector<retrieval::FeatureBank>& banks() const { return banks_; }

    // Cost-model inputs derived from this run: w is the payload size of one
    // model snapshot as this strategy transmits it.
    cost::CostModel cost_model() const;
    std::uint64_t symbolic_round_bytes(int round_index) const;

private:
    WeightSnapshot snapshot(const nn::ModelParams& model) const;
    void train_all_clients();
    void weight_sync_phase(std::uint64_t& measured);
    void feature_sync_phase(std::uint64_t& measured);
    void retrieval_prep(std::uint64_t& measured);

    Strategy strategy_;
    const data::Dataset& train_;
    const data::Dataset& val_;
    FederationConfig cfg_;
    ServerState server_;
    std::vector<ClientState> clients_;
    std::vector<retrieval::FeatureBank> banks_;  // one per client after prep
};

}  // namespace fedsim::fed
