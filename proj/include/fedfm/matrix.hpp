#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedfm {

// Dense row-major matrix of 64-bit reals. All shape checks happen in the
// operations; element access is unchecked.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    double* row(std::size_t i) { return values.data() + i * cols; }
    const double* row(std::size_t i) const { return values.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// a (n x k) * b (k x m) -> n x m
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T (k x n)^T * b (k x m) -> n x m, i.e. matmul(transpose(a), b) without the copy
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a (n x k) * b^T (m x k)^T -> n x m
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Throws NumericError mentioning `what` if any entry is NaN or Inf.
void ensure_finite(const Matrix& m, const std::string& what);

// Squared Frobenius distance between two same-shape matrices.
double squared_distance(const Matrix& a, const Matrix& b);

// Largest absolute entry-wise difference; throws DimensionError on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace fedfm
