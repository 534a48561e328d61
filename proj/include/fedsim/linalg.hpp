#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedsim {

using Vector = std::vector<double>;

// Dense row-major matrix, the only tensor type the simulator needs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool operator==(const Matrix& o) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

// a [n x k] * b^T with b [m x k] -> [n x m]
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a [n x k] * b [k x m] -> [n x m]
Matrix matmul_nn(const Matrix& a, const Matrix& b);
// a^T with a [n x k], times b [n x m] -> [k x m]
Matrix matmul_tn(const Matrix& a, const Matrix& b);

bool all_finite(std::span<const double> v);
bool all_finite(const Matrix& m);

}  // namespace fedsim
