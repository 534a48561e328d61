#include "fedsim/nn.hpp"

#include <cmath>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim::nn {

bool BackboneParams::same_shape(const BackboneParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].weight.same_shape(o.layers[i].weight)) return false;
        if (layers[i].bias.size() != o.layers[i].bias.size()) return false;
    }
    return true;
}

bool ModelParams::same_shape(const ModelParams& o) const {
    return backbone.same_shape(o.backbone) && head.anchors.same_shape(o.head.anchors) &&
           head_bias.size() == o.head_bias.size();
}

BackboneParams init_backbone(std::uint64_t seed, const std::vector<std::size_t>& arch) {
    if (arch.size() < 2) throw ConfigError("architecture needs at least input and output widths");
    for (std::size_t w : arch) {
        if (w == 0) throw ConfigError("architecture contains a zero-width layer");
    }
    Rng rng(seed);
    BackboneParams params;
    for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
        const std::size_t fan_in = arch[l];
        const std::size_t fan_out = arch[l + 1];
        DenseLayer layer;
        layer.weight = Matrix(fan_out, fan_in);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
        layer.bias = Vector(fan_out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

HeadParams init_softmax_head(Rng& rng, std::size_t n_classes, std::size_t d) {
    if (n_classes == 0 || d == 0) throw ConfigError("head dimensions must be positive");
    HeadParams head;
    head.anchors = Matrix(n_classes, d);
    const double bound = std::sqrt(6.0 / static_cast<double>(d + n_classes));
    for (double& w : head.anchors.data) w = rng.uniform(-bound, bound);
    return head;
}

HeadParams init_cosine_head(Rng& rng, std::size_t n_classes, std::size_t d) {
    if (n_classes == 0 || d == 0) throw ConfigError("head dimensions must be positive");
    HeadParams head;
    head.anchors = Matrix(n_classes, d);
    for (std::size_t j = 0; j < n_classes; ++j) {
        Vector row(d);
        double norm = 0.0;
        do {
            for (double& x : row) x = rng.normal();
            norm = norm2(row);
        } while (norm == 0.0);
        for (std::size_t c = 0; c < d; ++c) head.anchors(j, c) = row[c] / norm;
    }
    return head;
}

Matrix forward(const BackboneParams& params, const Matrix& inputs, ForwardCache* cache) {
    if (params.layers.empty()) throw ConfigError("backbone has no layers");
    if (inputs.cols != params.input_dim()) {
        throw ShapeError("forward: input dim " + std::to_string(inputs.cols) +
                         " does not match first layer " + std::to_string(params.input_dim()));
    }
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(inputs);
    }
    Matrix act = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DenseLayer& layer = params.layers[l];
        Matrix z = matmul_nt(act, layer.weight);
        for (std::size_t i = 0; i < z.rows; ++i) {
            for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += layer.bias[j];
        }
        const bool hidden = l + 1 < params.layers.size();
        if (hidden) {
            for (double& x : z.data) x = x > 0.0 ? x : 0.0;
        }
        act = std::move(z);
        if (cache) cache->activations.push_back(act);
    }
    return act;
}

BackboneParams backward(const BackboneParams& params, const ForwardCache& cache,
                        const Matrix& d_embeddings) {
    const std::size_t n_layers = params.layers.size();
    if (cache.activations.size() != n_layers + 1) {
        throw ShapeError("backward: cache does not match backbone depth");
    }
    if (!d_embeddings.same_shape(cache.activations.back())) {
        throw ShapeError("backward: d_embeddings shape mismatch");
    }
    BackboneParams grads;
    grads.layers.resize(n_layers);
    Matrix dz = d_embeddings;
    for (std::size_t l = n_layers; l-- > 0;) {
        const bool hidden = l + 1 < n_layers;
        if (hidden) {
            // ReLU: activation is zero exactly where the unit was clamped.
            const Matrix& act = cache.activations[l + 1];
            for (std::size_t i = 0; i < dz.data.size(); ++i) {
                if (act.data[i] <= 0.0) dz.data[i] = 0.0;
            }
        }
        const Matrix& input = cache.activations[l];
        grads.layers[l].weight = matmul_tn(dz, input);
        grads.layers[l].bias = Vector(dz.cols, 0.0);
        for (std::size_t i = 0; i < dz.rows; ++i) {
            for (std::size_t j = 0; j < dz.cols; ++j) grads.layers[l].bias[j] += dz(i, j);
        }
        if (l > 0) dz = matmul_nn(dz, params.layers[l].weight);
    }
    return grads;
}

BackboneParams grad(const EmbeddingLoss& loss, const BackboneParams& params, const Matrix& inputs) {
    ForwardCache cache;
    Matrix embeddings = forward(params, inputs, &cache);
    auto [value, d_embeddings] = loss(embeddings);
    if (!std::isfinite(value)) {
        throw NumericError("loss is not finite: " + std::to_string(value));
    }
    return backward(params, cache, d_embeddings);
}

AdamState adam_init(const ModelParams& shape) {
    AdamState state;
    state.m = shape;
    state.v = shape;
    visit_tensors(state.m, [](Vector& t) { std::fill(t.begin(), t.end(), 0.0); });
    visit_tensors(state.v, [](Vector& t) { std::fill(t.begin(), t.end(), 0.0); });
    state.step = 0;
    return state;
}

void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr) {
    if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
        throw ShapeError("adam_step: parameter, gradient and state shapes disagree");
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    std::vector<Vector*> p, m, v;
    std::vector<const Vector*> g;
    visit_tensors(params, [&](Vector& t) { p.push_back(&t); });
    visit_tensors(grads, [&](const Vector& t) { g.push_back(&t); });
    visit_tensors(state.m, [&](Vector& t) { m.push_back(&t); });
    visit_tensors(state.v, [&](Vector& t) { v.push_back(&t); });

    for (const Vector* t : g) {
        if (!all_finite(*t)) throw NumericError("adam_step: non-finite gradient");
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
        Vector& pk = *p[k];
        const Vector& gk = *g[k];
        Vector& mk = *m[k];
        Vector& vk = *v[k];
        for (std::size_t i = 0; i < pk.size(); ++i) {
            mk[i] = beta1 * mk[i] + (1.0 - beta1) * gk[i];
            vk[i] = beta2 * vk[i] + (1.0 - beta2) * gk[i] * gk[i];
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            pk[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

Vector l2_normalize(const Vector& v) {
    const double norm = norm2(v);
    if (norm == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

}  // namespace fedsim::nn
