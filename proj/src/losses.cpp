#include "fedsim/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim::losses {

namespace {

void check_labels(std::span<const int> labels, std::size_t n_rows, std::size_t n_classes) {
    if (labels.size() != n_rows) throw ShapeError("labels do not match batch size");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw LabelError("label " + std::to_string(y) + " outside [0, " +
                             std::to_string(n_classes) + ")");
        }
    }
}

// Row-normalized copy plus the row norms. Zero rows are degenerate.
Matrix normalize_rows(const Matrix& m, Vector& norms, const char* what) {
    Matrix out(m.rows, m.cols);
    norms.assign(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double norm = norm2(m.row(i));
        if (norm == 0.0) {
            throw DegenerateInputError(std::string(what) + " row " + std::to_string(i) +
                                       " is the zero vector");
        }
        norms[i] = norm;
        for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            p(i, j) = std::exp(logits(i, j) - mx);
            denom += p(i, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) p(i, j) /= denom;
    }
    return p;
}

// ArcFace margin applied to the true-class cosine.
double margin_cos(double c, double cos_m, double sin_m) {
    const double sin_sq = 1.0 - c * c;
    const double sin_theta = sin_sq > 0.0 ? std::sqrt(sin_sq) : 0.0;
    return c * cos_m - sin_theta * sin_m;
}

// d(margin_cos)/d(cos); at the sin clamp the sine term is constant zero.
double margin_cos_deriv(double c, double cos_m, double sin_m) {
    const double sin_sq = 1.0 - c * c;
    if (sin_sq <= 0.0) return cos_m;
    return cos_m + c / std::sqrt(sin_sq) * sin_m;
}

}  // namespace

void MarginConfig::validate() const {
    if (!(s > 0.0)) throw ConfigError("scale s must be positive");
    if (!(m >= 0.0) || !(m < std::numbers::pi / 2.0)) {
        throw ConfigError("margin m must lie in [0, pi/2)");
    }
}

double softmax_ce(const Matrix& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows, logits.cols);
    if (logits.rows == 0) throw ShapeError("softmax_ce: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) denom += std::exp(logits(i, j) - mx);
        total += mx + std::log(denom) - logits(i, static_cast<std::size_t>(labels[i]));
    }
    return total / static_cast<double>(logits.rows);
}

Matrix softmax_ce_grad(const Matrix& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows, logits.cols);
    Matrix g = softmax(logits);
    const double inv_n = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        g(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < logits.cols; ++j) g(i, j) *= inv_n;
    }
    return g;
}

Matrix cosine_logits(const Matrix& embeddings, const nn::HeadParams& head) {
    if (embeddings.cols != head.anchors.cols) {
        throw ShapeError("cosine_logits: embedding dim does not match anchors");
    }
    Vector e_norms, a_norms;
    const Matrix u = normalize_rows(embeddings, e_norms, "embedding");
    const Matrix a = normalize_rows(head.anchors, a_norms, "anchor");
    Matrix c = matmul_nt(u, a);
    // Rounding can push |cos| a hair past 1.
    for (double& x : c.data) x = std::clamp(x, -1.0, 1.0);
    return c;
}

double nsl_loss(const Matrix& embeddings, const nn::HeadParams& head,
                std::span<const int> labels) {
    return softmax_ce(cosine_logits(embeddings, head), labels);
}

double arcface_loss(const Matrix& embeddings, const nn::HeadParams& head,
                    std::span<const int> labels, const MarginConfig& cfg) {
    cfg.validate();
    Matrix c = cosine_logits(embeddings, head);
    check_labels(labels, c.rows, c.cols);
    const double cos_m = std::cos(cfg.m);
    const double sin_m = std::sin(cfg.m);
    for (std::size_t i = 0; i < c.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        c(i, y) = margin_cos(c(i, y), cos_m, sin_m);
        for (std::size_t j = 0; j < c.cols; ++j) c(i, j) *= cfg.s;
    }
    return softmax_ce(c, labels);
}

double plain_softmax_loss(const Matrix& embeddings, const nn::HeadParams& head,
                          const Vector& bias, std::span<const int> labels) {
    if (embeddings.cols != head.anchors.cols) {
        throw ShapeError("plain_softmax_loss: embedding dim does not match head");
    }
    if (bias.size() != head.anchors.rows) throw ShapeError("plain_softmax_loss: bias size");
    Matrix z = matmul_nt(embeddings, head.anchors);
    for (std::size_t i = 0; i < z.rows; ++i) {
        for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += bias[j];
    }
    return softmax_ce(z, labels);
}

LossEval evaluate_loss(LossKind kind, const Matrix& embeddings, const nn::HeadParams& head,
                       const Vector& bias, std::span<const int> labels, const MarginConfig& cfg) {
    const std::size_t n_classes = head.anchors.rows;
    const std::size_t d = head.anchors.cols;
    if (embeddings.cols != d) throw ShapeError("evaluate_loss: embedding dim mismatch");
    check_labels(labels, embeddings.rows, n_classes);

    LossEval out;
    if (kind == LossKind::SoftmaxCe) {
        Matrix z = matmul_nt(embeddings, head.anchors);
        for (std::size_t i = 0; i < z.rows; ++i) {
            for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += bias[j];
        }
        out.value = softmax_ce(z, labels);
        Matrix g = softmax_ce_grad(z, labels);
        out.d_embeddings = matmul_nn(g, head.anchors);
        out.d_anchors = matmul_tn(g, embeddings);
        out.d_bias = Vector(n_classes, 0.0);
        for (std::size_t i = 0; i < g.rows; ++i) {
            for (std::size_t j = 0; j < g.cols; ++j) out.d_bias[j] += g(i, j);
        }
        return out;
    }

    // Cosine family. Margin/scale only for ArcFace; NSL is the m=0, s=1 form.
    const double s = kind == LossKind::ArcFace ? cfg.s : 1.0;
    const double m = kind == LossKind::ArcFace ? cfg.m : 0.0;
    if (kind == LossKind::ArcFace) cfg.validate();
    const double cos_m = std::cos(m);
    const double sin_m = std::sin(m);

    Vector e_norms, a_norms;
    const Matrix u = normalize_rows(embeddings, e_norms, "embedding");
    const Matrix a = normalize_rows(head.anchors, a_norms, "anchor");
    Matrix c = matmul_nt(u, a);
    for (double& x : c.data) x = std::clamp(x, -1.0, 1.0);

    Matrix z = c;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        z(i, y) = margin_cos(c(i, y), cos_m, sin_m);
        for (std::size_t j = 0; j < z.cols; ++j) z(i, j) *= s;
    }
    out.value = softmax_ce(z, labels);

    Matrix g = softmax_ce_grad(z, labels);  // d/dz
    // Chain through the margin and scale onto the cosines.
    Matrix dc = g;
    for (std::size_t i = 0; i < dc.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < dc.cols; ++j) {
            double factor = s;
            if (j == y) factor *= margin_cos_deriv(c(i, y), cos_m, sin_m);
            dc(i, j) *= factor;
        }
    }
    // du_i = sum_j dc_ij a_j ; de_i = (du_i - (du_i . u_i) u_i) / ||e_i||
    Matrix du = matmul_nn(dc, a);
    out.d_embeddings = Matrix(embeddings.rows, d);
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        const double proj = dot(du.row(i), u.row(i));
        for (std::size_t j = 0; j < d; ++j) {
            out.d_embeddings(i, j) = (du(i, j) - proj * u(i, j)) / e_norms[i];
        }
    }
    // da_j = sum_i dc_ij u_i ; dA_j = (da_j - (da_j . a_j) a_j) / ||W_j||
    Matrix da = matmul_tn(dc, u);
    out.d_anchors = Matrix(n_classes, d);
    for (std::size_t j = 0; j < n_classes; ++j) {
        const double proj = dot(da.row(j), a.row(j));
        for (std::size_t k = 0; k < d; ++k) {
            out.d_anchors(j, k) = (da(j, k) - proj * a(j, k)) / a_norms[j];
        }
    }
    out.d_bias = Vector(bias.size(), 0.0);
    return out;
}

}  // namespace fedsim::losses
