#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dcache/error.hpp"

namespace dcache {

// Dense row-major float32 matrix. Every reduction over its elements runs in a
// fixed sequential order with a double accumulator, so two code paths that
// compute the same mathematical value produce the same bits. That property is
// what the cached-vs-uncached equivalence tests lean on.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows) {
        Matrix m(rows.size(), rows.size() > 0 ? rows.begin()->size() : 0);
        std::size_t r = 0;
        for (const auto& row : rows) {
            if (row.size() != m.cols_)
                throw contract_error("Matrix::from_rows: ragged row lengths");
            std::copy(row.begin(), row.end(), m.row_data(r));
            r++;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    float* row_data(std::size_t r) { return data_.data() + r * cols_; }
    const float* row_data(std::size_t r) const { return data_.data() + r * cols_; }
    std::span<const float> row(std::size_t r) const { return {row_data(r), cols_}; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline bool bit_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        return false;
    if (a.size() == 0)
        return true;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

inline bool all_finite(const Matrix& m) {
    for (float v : m.data())
        if (!std::isfinite(v))
            return false;
    return true;
}

inline void ensure_finite(const Matrix& m, const char* op) {
    if (!all_finite(m))
        throw internal_error(std::string(op) + ": produced non-finite values");
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw contract_error("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    Matrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < a.rows(); i++) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < a.cols(); k++) {
            const double av = a(i, k);
            const float* brow = b.row_data(k);
            for (std::size_t j = 0; j < n; j++)
                acc[j] += av * static_cast<double>(brow[j]);
        }
        float* orow = out.row_data(i);
        for (std::size_t j = 0; j < n; j++)
            orow[j] = static_cast<float>(acc[j]);
    }
    ensure_finite(out, "matmul");
    return out;
}

// Row-wise stable softmax: per-row max subtraction, exp and sum in double.
inline Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); i++) {
        const float* src = m.row_data(i);
        float* dst = out.row_data(i);
        float mx = src[0];
        for (std::size_t j = 1; j < m.cols(); j++)
            mx = std::max(mx, src[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); j++)
            sum += std::exp(static_cast<double>(src[j]) - static_cast<double>(mx));
        for (std::size_t j = 0; j < m.cols(); j++)
            dst[j] = static_cast<float>(
                std::exp(static_cast<double>(src[j]) - static_cast<double>(mx)) / sum);
    }
    ensure_finite(out, "softmax_rows");
    return out;
}

// Row-wise normalization to mean 0 / variance 1 with 1/sqrt(var + eps).
// No learned scale or shift.
inline Matrix layer_norm(const Matrix& m, float eps) {
    if (m.cols() == 0)
        throw contract_error("layer_norm: needs at least one column");
    Matrix out(m.rows(), m.cols());
    const double n = static_cast<double>(m.cols());
    for (std::size_t i = 0; i < m.rows(); i++) {
        const float* src = m.row_data(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < m.cols(); j++)
            mean += src[j];
        mean /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < m.cols(); j++) {
            const double dv = static_cast<double>(src[j]) - mean;
            var += dv * dv;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        float* dst = out.row_data(i);
        for (std::size_t j = 0; j < m.cols(); j++)
            dst[j] = static_cast<float>((static_cast<double>(src[j]) - mean) * inv);
    }
    ensure_finite(out, "layer_norm");
    return out;
}

// Cosine similarity in [-1, 1]. A vector with norm below 1e-12 is treated as
// "changed": the result is 0, which sorts it toward recomputation.
inline double cosine_similarity(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw contract_error("cosine_similarity: length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); i++) {
        dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
        nu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
        nv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
    }
    const double norm_u = std::sqrt(nu);
    const double norm_v = std::sqrt(nv);
    if (norm_u < 1e-12 || norm_v < 1e-12)
        return 0.0;
    return std::clamp(dot / (norm_u * norm_v), -1.0, 1.0);
}

inline double l2_distance(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw contract_error("l2_distance: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); i++) {
        const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

inline void validate_row_indices(const std::vector<std::size_t>& idx, std::size_t rows,
                                 const char* op) {
    for (std::size_t i = 0; i < idx.size(); i++) {
        if (idx[i] >= rows)
            throw contract_error(std::string(op) + ": index out of range");
        if (i > 0 && idx[i] <= idx[i - 1])
            throw contract_error(std::string(op) + ": indices must be strictly ascending");
    }
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    validate_row_indices(idx, m.rows(), "gather_rows");
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); i++)
        std::memcpy(out.row_data(i), m.row_data(idx[i]), m.cols() * sizeof(float));
    return out;
}

// Returns dst with exactly the rows in idx replaced by src; all other rows
// are bit-identical to the input.
inline Matrix scatter_rows(Matrix dst, const std::vector<std::size_t>& idx, const Matrix& src) {
    validate_row_indices(idx, dst.rows(), "scatter_rows");
    if (src.rows() != idx.size())
        throw contract_error("scatter_rows: src row count must equal index count");
    if (src.cols() != dst.cols())
        throw contract_error("scatter_rows: column mismatch");
    for (std::size_t i = 0; i < idx.size(); i++)
        std::memcpy(dst.row_data(idx[i]), src.row_data(i), dst.cols() * sizeof(float));
    return dst;
}

// Stack a on top of b. Empty operands must still carry the shared column
// count (a 0 x d block concatenates cleanly).
inline Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw contract_error("vconcat: column mismatch");
    Matrix out(a.rows() + b.rows(), a.cols());
    if (a.size() > 0)
        std::memcpy(out.row_data(0), a.data().data(), a.size() * sizeof(float));
    if (b.size() > 0)
        std::memcpy(out.row_data(a.rows()), b.data().data(), b.size() * sizeof(float));
    return out;
}

// Copy of rows [begin, end) as a new matrix.
inline Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows())
        throw contract_error("slice_rows: bad range");
    Matrix out(end - begin, m.cols());
    if (out.size() > 0)
        std::memcpy(out.row_data(0), m.row_data(begin), out.size() * sizeof(float));
    return out;
}

// dst rows [at, at + src.rows) += src, elementwise float add.
inline void add_rows_inplace(Matrix& dst, std::size_t at, const Matrix& src) {
    if (src.cols() != dst.cols() || at + src.rows() > dst.rows())
        throw contract_error("add_rows_inplace: shape mismatch");
    for (std::size_t i = 0; i < src.rows(); i++) {
        float* d = dst.row_data(at + i);
        const float* s = src.row_data(i);
        for (std::size_t j = 0; j < src.cols(); j++)
            d[j] += s[j];
    }
}

}  // namespace dcache
