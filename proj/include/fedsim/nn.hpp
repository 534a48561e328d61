#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedsim/linalg.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::nn {

// Backbone MLP: ReLU on hidden layers, linear final layer producing the
// d-dimensional embedding.
struct DenseLayer {
    Matrix weight;  // [out x in]
    Vector bias;    // [out]
};

struct BackboneParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
    std::size_t embedding_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }
    bool same_shape(const BackboneParams& o) const;
};

// Per-class anchor rows W_j, [n_classes x d]. Cosine-head strategies keep the
// rows unit L2 norm; the plain softmax head of strategy 1 does not constrain
// them. The cosine head has no bias term.
struct HeadParams {
    Matrix anchors;
};

// A complete client model. head_bias belongs to the plain softmax head only;
// cosine-head strategies leave it at zero and never touch it.
struct ModelParams {
    BackboneParams backbone;
    HeadParams head;
    Vector head_bias;

    bool same_shape(const ModelParams& o) const;
};

// Gradients mirror the parameter layout exactly.
using ModelGrads = ModelParams;

// First/second Adam moment accumulators, same shapes as the parameters.
struct AdamState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;
};

// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases.
// arch lists layer widths including the input, e.g. {4, 8, 16}; the last
// entry is the embedding dimension d.
BackboneParams init_backbone(std::uint64_t seed, const std::vector<std::size_t>& arch);

// Plain softmax head for strategy 1: Glorot-uniform anchor rows.
HeadParams init_softmax_head(Rng& rng, std::size_t n_classes, std::size_t d);

// Cosine head: unit-norm random anchor rows.
HeadParams init_cosine_head(Rng& rng, std::size_t n_classes, std::size_t d);

// Activations per layer, kept for the backward pass. activations[0] is the
// input batch; activations[L] the embeddings.
struct ForwardCache {
    std::vector<Matrix> activations;
};

Matrix forward(const BackboneParams& params, const Matrix& inputs, ForwardCache* cache = nullptr);

// Gradients of a scalar loss w.r.t. the backbone, given d(loss)/d(embeddings).
BackboneParams backward(const BackboneParams& params, const ForwardCache& cache,
                        const Matrix& d_embeddings);

// A differentiable loss on embeddings: value plus d(value)/d(embeddings).
using EmbeddingLoss = std::function<std::pair<double, Matrix>(const Matrix& embeddings)>;

// Reverse-mode gradient of loss(forward(params, inputs)) w.r.t. params.
BackboneParams grad(const EmbeddingLoss& loss, const BackboneParams& params, const Matrix& inputs);

AdamState adam_init(const ModelParams& shape);

// One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over every tensor in the
// model. Tensors whose gradients are all zero and whose moments never moved
// stay bitwise unchanged.
void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr);

// Unit vector in the direction of v; zero input is an error by design, a zero
// embedding means a broken model.
Vector l2_normalize(const Vector& v);

// Applies fn to every parameter tensor of the model in a fixed order.
template <typename Model, typename Fn>
void visit_tensors(Model&& model, Fn&& fn) {
    for (auto& layer : model.backbone.layers) {
        fn(layer.weight.data);
        fn(layer.bias);
    }
    fn(model.head.anchors.data);
    fn(model.head_bias);
}

}  // namespace fedsim::nn
