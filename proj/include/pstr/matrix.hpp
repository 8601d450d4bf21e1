#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pstr/common.hpp"

namespace pstr {

// Dense row-major matrix of doubles. All features and parameter tensors
// are small (at most a few hundred rows), so no BLAS backing.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }

    double norm() const {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
    }
};

// y += a * x
inline void axpy(Matrix& y, double a, const Matrix& x) {
    if (!y.same_shape(x)) throw ArgumentError("axpy: shape mismatch");
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
}

// out = W * x for a row vector x of length W.cols -> length W.rows
inline void matvec(const Matrix& w, const double* x, double* out) {
    for (int r = 0; r < w.rows; ++r) {
        double s = 0.0;
        const double* wr = w.row(r);
        for (int c = 0; c < w.cols; ++c) s += wr[c] * x[c];
        out[r] = s;
    }
}

// out += W^T * g
inline void matvec_transpose_add(const Matrix& w, const double* g, double* out) {
    for (int r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        const double gr = g[r];
        for (int c = 0; c < w.cols; ++c) out[c] += wr[c] * gr;
    }
}

// dW += g (outer) x
inline void outer_add(Matrix& dw, const double* g, const double* x) {
    for (int r = 0; r < dw.rows; ++r) {
        double* wr = dw.row(r);
        const double gr = g[r];
        for (int c = 0; c < dw.cols; ++c) wr[c] += gr * x[c];
    }
}

} // namespace pstr
