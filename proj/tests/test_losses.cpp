#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/losses.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int n_classes) {
    std::vector<int> labels(n);
    for (int& y : labels) y = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_classes)));
    return labels;
}

}  // namespace

TEST_CASE("softmax_ce: uniform logits give ln(n)") {
    for (std::size_t n : {2, 5, 10}) {
        Matrix logits(3, n, 0.37);
        std::vector<int> labels{0, static_cast<int>(n - 1), static_cast<int>(n / 2)};
        CHECK(losses::softmax_ce(logits, labels) ==
              doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
    }
}

TEST_CASE("softmax_ce: saturated true logit gives ~0 and stays finite") {
    Matrix logits(1, 4, 0.0);
    logits(0, 2) = 1000.0;
    std::vector<int> labels{2};
    const double loss = losses::softmax_ce(logits, labels);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_ce matches the scalar-loop oracle") {
    Rng rng(5);
    const Matrix logits = random_matrix(rng, 3, 4, 2.0);
    const std::vector<int> labels{1, 3, 0};
    CHECK(losses::softmax_ce(logits, labels) ==
          doctest::Approx(oracle::softmax_ce(logits, labels)).epsilon(1e-10));
}

TEST_CASE("softmax_ce rejects out-of-range labels") {
    Matrix logits(2, 3, 0.0);
    CHECK_THROWS_AS(losses::softmax_ce(logits, std::vector<int>{0, 3}), LabelError);
    CHECK_THROWS_AS(losses::softmax_ce(logits, std::vector<int>{-1, 0}), LabelError);
}

TEST_CASE("cosine_logits: aligned, orthogonal and oracle cases") {
    nn::HeadParams head;
    head.anchors = Matrix(2, 2);
    head.anchors(0, 0) = 2.0;  // direction (1, 0), non-unit on purpose
    head.anchors(1, 1) = 0.5;  // direction (0, 1)
    Matrix emb(1, 2);
    emb(0, 0) = 3.0;

    const Matrix c = losses::cosine_logits(emb, head);
    CHECK(c(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(17);
    const Matrix e = random_matrix(rng, 4, 6);
    nn::HeadParams h;
    h.anchors = random_matrix(rng, 3, 6);
    const Matrix got = losses::cosine_logits(e, h);
    for (std::size_t i = 0; i < got.rows; ++i) {
        for (std::size_t j = 0; j < got.cols; ++j) {
            const double expected =
                dot(e.row(i), h.anchors.row(j)) / (norm2(e.row(i)) * norm2(h.anchors.row(j)));
            CHECK(got(i, j) == doctest::Approx(expected).epsilon(1e-9));
            CHECK(got(i, j) >= -1.0);
            CHECK(got(i, j) <= 1.0);
        }
    }
}

TEST_CASE("cosine_logits rejects zero rows") {
    nn::HeadParams head;
    head.anchors = Matrix(2, 3, 1.0);
    CHECK_THROWS_AS(losses::cosine_logits(Matrix(1, 3, 0.0), head), DegenerateInputError);
    head.anchors = Matrix(2, 3, 0.0);
    CHECK_THROWS_AS(losses::cosine_logits(Matrix(1, 3, 1.0), head), DegenerateInputError);
}

TEST_CASE("nsl_loss: hand-evaluated two-class fixture") {
    // Embedding equals anchor 0; anchor 1 orthogonal: cosines (1, 0), so the
    // loss is ln(1 + e^(0-1)).
    nn::HeadParams head;
    head.anchors = Matrix(2, 2);
    head.anchors(0, 0) = 1.0;
    head.anchors(1, 1) = 1.0;
    Matrix emb(1, 2);
    emb(0, 0) = 1.0;
    const std::vector<int> labels{0};
    CHECK(losses::nsl_loss(emb, head, labels) ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("arcface reduces to nsl at m=0, s=1") {
    Rng rng(23);
    const losses::MarginConfig reduced{0.0, 1.0};
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix emb = random_matrix(rng, 5, 8);
        nn::HeadParams head;
        head.anchors = random_matrix(rng, 4, 8);
        const auto labels = random_labels(rng, 5, 4);
        const double a = losses::arcface_loss(emb, head, labels, reduced);
        const double b = losses::nsl_loss(emb, head, labels);
        CHECK(std::fabs(a - b) < 1e-12);
    }
}

TEST_CASE("arcface: hand-evaluated margin fixture") {
    // Single sample, cos(theta_true) = 1, one other class at cos = 0:
    // loss = -log(e^{20 cos 0.2} / (e^{20 cos 0.2} + 1)).
    nn::HeadParams head;
    head.anchors = Matrix(2, 2);
    head.anchors(0, 0) = 1.0;
    head.anchors(1, 1) = 1.0;
    Matrix emb(1, 2);
    emb(0, 0) = 5.0;
    const std::vector<int> labels{0};
    const losses::MarginConfig cfg{0.2, 20.0};
    const double a = 20.0 * std::cos(0.2);
    CHECK(losses::arcface_loss(emb, head, labels, cfg) ==
          doctest::Approx(std::log1p(std::exp(-a))).epsilon(1e-12));
}

TEST_CASE("arcface loss never decreases as the margin grows") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix emb = random_matrix(rng, 6, 5);
        nn::HeadParams head;
        head.anchors = random_matrix(rng, 3, 5);
        const auto labels = random_labels(rng, 6, 3);
        double prev = -1.0;
        for (double m : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}) {
            const double loss = losses::arcface_loss(emb, head, labels, {m, 20.0});
            CHECK(loss >= prev);
            CHECK(loss >= 0.0);
            CHECK(std::isfinite(loss));
            prev = loss;
        }
    }
}

TEST_CASE("cosine losses are invariant to positive rescaling") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix emb = random_matrix(rng, 4, 6);
        nn::HeadParams head;
        head.anchors = random_matrix(rng, 3, 6);
        const auto labels = random_labels(rng, 4, 3);
        const losses::MarginConfig cfg{0.2, 20.0};

        Matrix scaled_emb = emb;
        const double ce = std::exp(rng.uniform(-2.0, 2.0));
        for (double& v : scaled_emb.data) v *= ce;
        nn::HeadParams scaled_head = head;
        const double ca = std::exp(rng.uniform(-2.0, 2.0));
        for (double& v : scaled_head.anchors.data) v *= ca;

        CHECK(std::fabs(losses::nsl_loss(emb, head, labels) -
                        losses::nsl_loss(scaled_emb, scaled_head, labels)) < 1e-9);
        CHECK(std::fabs(losses::arcface_loss(emb, head, labels, cfg) -
                        losses::arcface_loss(scaled_emb, scaled_head, labels, cfg)) < 1e-9);
    }
}

TEST_CASE("MarginConfig validation") {
    CHECK_THROWS_AS((losses::MarginConfig{0.2, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((losses::MarginConfig{-0.1, 20.0}.validate()), ConfigError);
    CHECK_THROWS_AS((losses::MarginConfig{1.6, 20.0}.validate()), ConfigError);
    CHECK_NOTHROW((losses::MarginConfig{0.0, 1.0}.validate()));
}

TEST_CASE("evaluate_loss values agree with the standalone loss functions") {
    Rng rng(47);
    const Matrix emb = random_matrix(rng, 5, 6);
    nn::HeadParams head;
    head.anchors = random_matrix(rng, 4, 6);
    Vector bias(4);
    for (double& b : bias) b = rng.uniform(-0.5, 0.5);
    const auto labels = random_labels(rng, 5, 4);
    const losses::MarginConfig cfg{0.2, 20.0};

    CHECK(losses::evaluate_loss(losses::LossKind::ArcFace, emb, head, bias, labels, cfg).value ==
          doctest::Approx(losses::arcface_loss(emb, head, labels, cfg)).epsilon(1e-12));
    CHECK(losses::evaluate_loss(losses::LossKind::Nsl, emb, head, bias, labels, cfg).value ==
          doctest::Approx(losses::nsl_loss(emb, head, labels)).epsilon(1e-12));
    CHECK(losses::evaluate_loss(losses::LossKind::SoftmaxCe, emb, head, bias, labels, cfg).value ==
          doctest::Approx(losses::plain_softmax_loss(emb, head, bias, labels)).epsilon(1e-12));
}

TEST_CASE("loss gradients w.r.t. embeddings, anchors and bias match finite differences") {
    Rng rng(53);
    const losses::MarginConfig cfg{0.2, 20.0};
    for (losses::LossKind kind :
         {losses::LossKind::SoftmaxCe, losses::LossKind::Nsl, losses::LossKind::ArcFace}) {
        for (int trial = 0; trial < 10; ++trial) {
            Matrix emb = random_matrix(rng, 4, 5);
            nn::HeadParams head;
            head.anchors = random_matrix(rng, 3, 5);
            Vector bias(3);
            for (double& b : bias) b = rng.uniform(-0.3, 0.3);
            const auto labels = random_labels(rng, 4, 3);

            const auto eval = losses::evaluate_loss(kind, emb, head, bias, labels, cfg);
            const double step = 1e-5;
            auto loss_at = [&](const Matrix& e, const nn::HeadParams& h, const Vector& b) {
                return losses::evaluate_loss(kind, e, h, b, labels, cfg).value;
            };
            double worst = 0.0;
            auto fd_check = [&](double got, double up, double down) {
                const double fd = (up - down) / (2.0 * step);
                const double scale = std::max({1.0, std::fabs(fd), std::fabs(got)});
                worst = std::max(worst, std::fabs(got - fd) / scale);
            };
            for (std::size_t i = 0; i < emb.data.size(); ++i) {
                const double saved = emb.data[i];
                emb.data[i] = saved + step;
                const double up = loss_at(emb, head, bias);
                emb.data[i] = saved - step;
                const double down = loss_at(emb, head, bias);
                emb.data[i] = saved;
                fd_check(eval.d_embeddings.data[i], up, down);
            }
            for (std::size_t i = 0; i < head.anchors.data.size(); ++i) {
                const double saved = head.anchors.data[i];
                head.anchors.data[i] = saved + step;
                const double up = loss_at(emb, head, bias);
                head.anchors.data[i] = saved - step;
                const double down = loss_at(emb, head, bias);
                head.anchors.data[i] = saved;
                fd_check(eval.d_anchors.data[i], up, down);
            }
            for (std::size_t i = 0; i < bias.size(); ++i) {
                const double saved = bias[i];
                bias[i] = saved + step;
                const double up = loss_at(emb, head, bias);
                bias[i] = saved - step;
                const double down = loss_at(emb, head, bias);
                bias[i] = saved;
                fd_check(eval.d_bias[i], up, down);
            }
            CHECK(worst < 1e-4);
        }
    }
}
