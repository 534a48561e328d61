#pragma once

#include <span>

#include "fedsim/linalg.hpp"
#include "fedsim/nn.hpp"

namespace fedsim::losses {

// Additive angular margin m (radians on the cosine angle) and logit scale s.
struct MarginConfig {
    double m = 0.2;
    double s = 20.0;

    void validate() const;
};

// Mean negative log-likelihood of the true class under softmax(logits),
// log-sum-exp stabilized.
double softmax_ce(const Matrix& logits, std::span<const int> labels);

// d(softmax_ce)/d(logits) = (softmax - onehot) / N.
Matrix softmax_ce_grad(const Matrix& logits, std::span<const int> labels);

// Entry (i, j) = cos of the angle between embedding i and anchor j, both
// L2-normalized first. Zero rows are rejected.
Matrix cosine_logits(const Matrix& embeddings, const nn::HeadParams& head);

// Softmax cross-entropy on raw cosine logits: no margin, no scale.
double nsl_loss(const Matrix& embeddings, const nn::HeadParams& head, std::span<const int> labels);

// Cross-entropy where the true-class logit is s*cos(theta + m) and the rest
// are s*cos(theta). cos(theta + m) is expanded as cos*cos(m) - sin*sin(m)
// with sin(theta) = sqrt(max(0, 1 - cos^2)).
double arcface_loss(const Matrix& embeddings, const nn::HeadParams& head,
                    std::span<const int> labels, const MarginConfig& cfg);

// Conventional linear head: logits = embeddings * W^T + b, then softmax CE.
double plain_softmax_loss(const Matrix& embeddings, const nn::HeadParams& head,
                          const Vector& bias, std::span<const int> labels);

enum class LossKind {
    SoftmaxCe,  // strategy 1: trainable linear head with bias
    Nsl,        // cosine logits, no margin or scale
    ArcFace,    // margin + scale
};

// Loss value plus gradients w.r.t. everything the loss touches.
struct LossEval {
    double value = 0.0;
    Matrix d_embeddings;
    Matrix d_anchors;
    Vector d_bias;  // nonzero only for SoftmaxCe
};

LossEval evaluate_loss(LossKind kind, const Matrix& embeddings, const nn::HeadParams& head,
                       const Vector& bias, std::span<const int> labels, const MarginConfig& cfg);

}  // namespace fedsim::losses
