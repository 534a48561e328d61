#include "fedsim/linalg.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
            out(i, j) = dot(a.row(i), b.row(j));
        }
    }
    return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul_nn: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeError("matmul_tn: inner dimensions differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t n = 0; n < a.rows; ++n) {
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double ani = a(n, i);
            if (ani == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out(i, j) += ani * b(n, j);
            }
        }
    }
    return out;
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(std::span<const double>(m.data));
}

}  // namespace fedsim
