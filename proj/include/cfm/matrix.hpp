#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfm {

// Dense row-major matrix of doubles. The single numeric carrier for data,
// parameters, activations and gradients.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
        if (rows_in.empty()) return {};
        Matrix out(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
        for (int i = 0; i < out.rows; ++i) {
            if (static_cast<int>(rows_in[i].size()) != out.cols)
                throw std::invalid_argument("Matrix::from_rows: ragged input");
            std::copy(rows_in[i].begin(), rows_in[i].end(), out.row_ptr(i));
        }
        return out;
    }

    double& operator()(int i, int j) {
        return data[static_cast<std::size_t>(i) * cols + j];
    }
    double operator()(int i, int j) const {
        return data[static_cast<std::size_t>(i) * cols + j];
    }
    double* row_ptr(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row_ptr(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::size_t size() const { return data.size(); }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

enum class ElemOp { add, sub, mul };

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

// Entrywise op. b must either match a's shape or be a single row that is
// broadcast across all rows of a.
inline Matrix elementwise(const Matrix& a, const Matrix& b, ElemOp op) {
    const bool broadcast = b.rows == 1 && b.cols == a.cols;
    if (!a.same_shape(b) && !broadcast)
        throw std::invalid_argument("elementwise: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    Matrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        const double* brow = b.rows == a.rows ? b.row_ptr(i) : b.row_ptr(0);
        double* orow = out.row_ptr(i);
        switch (op) {
            case ElemOp::add:
                for (int j = 0; j < a.cols; ++j) orow[j] = arow[j] + brow[j];
                break;
            case ElemOp::sub:
                for (int j = 0; j < a.cols; ++j) orow[j] = arow[j] - brow[j];
                break;
            case ElemOp::mul:
                for (int j = 0; j < a.cols; ++j) orow[j] = arow[j] * brow[j];
                break;
        }
    }
    return out;
}

// Row-wise softmax with per-row max subtraction, so large logits never overflow.
inline Matrix softmax_rows(const Matrix& a) {
    Matrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        double mx = arow[0];
        for (int j = 1; j < a.cols; ++j) mx = std::max(mx, arow[j]);
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            orow[j] = std::exp(arow[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < a.cols; ++j) orow[j] /= sum;
    }
    return out;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
    return out;
}

// Mean over rows, returned as a 1 x cols matrix.
inline Matrix col_mean(const Matrix& a) {
    if (a.rows == 0) throw std::invalid_argument("col_mean: empty matrix");
    Matrix out(1, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        for (int j = 0; j < a.cols; ++j) out.data[j] += arow[j];
    }
    for (int j = 0; j < a.cols; ++j) out.data[j] /= a.rows;
    return out;
}

inline Matrix col_sum(const Matrix& a) {
    Matrix out(1, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        for (int j = 0; j < a.cols; ++j) out.data[j] += arow[j];
    }
    return out;
}

inline Matrix restrict_columns(const Matrix& a, const std::vector<int>& cols) {
    Matrix out(a.rows, static_cast<int>(cols.size()));
    for (int j = 0; j < out.cols; ++j)
        if (cols[j] < 0 || cols[j] >= a.cols)
            throw std::invalid_argument("restrict_columns: column index out of range");
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int j = 0; j < out.cols; ++j) orow[j] = arow[cols[j]];
    }
    return out;
}

inline Matrix take_rows(const Matrix& a, const std::vector<int>& rows) {
    Matrix out(static_cast<int>(rows.size()), a.cols);
    for (int i = 0; i < out.rows; ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows)
            throw std::invalid_argument("take_rows: row index out of range");
        std::copy(a.row_ptr(rows[i]), a.row_ptr(rows[i]) + a.cols, out.row_ptr(i));
    }
    return out;
}

}  // namespace cfm
