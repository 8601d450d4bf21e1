#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "pstr/common.hpp"
#include "pstr/matrix.hpp"

namespace pstr {

constexpr double kZeroNormEps = 1e-300;

// Flattened, elementwise-tanh view of a sequence feature with its norm
// cached; every similarity below is a plain cosine over these vectors.
struct TanhFlat {
    std::vector<double> u;
    double norm = 0.0;

    TanhFlat() = default;
    explicit TanhFlat(const Matrix& f) {
        u.resize(f.v.size());
        double s = 0.0;
        for (std::size_t i = 0; i < f.v.size(); ++i) {
            u[i] = std::tanh(f.v[i]);
            s += u[i] * u[i];
        }
        norm = std::sqrt(s);
    }

    bool degenerate() const { return norm <= kZeroNormEps; }
};

inline double cosine(const TanhFlat& a, const TanhFlat& b, bool* degenerate = nullptr) {
    if (a.u.size() != b.u.size()) throw ArgumentError("sim_f: shape mismatch");
    if (a.degenerate() || b.degenerate()) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i) dot += a.u[i] * b.u[i];
    return dot / (a.norm * b.norm);
}

// Cosine similarity of the tanh-transformed flattened features. A zero
// norm operand yields 0 and raises the degenerate flag.
inline double sim_f(const Matrix& a, const Matrix& b, bool* degenerate = nullptr) {
    if (!a.same_shape(b)) throw ArgumentError("sim_f: shape mismatch");
    return cosine(TanhFlat(a), TanhFlat(b), degenerate);
}

// T x T grid of per-position cosine similarities between line rows (x)
// and query rows (y).
struct SimilarityGrid {
    Matrix cells; // cells(x, y)
};

namespace detail {

inline double row_cosine(const double* a, const double* b, int c, bool* degenerate) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int k = 0; k < c; ++k) {
        const double ta = std::tanh(a[k]);
        const double tb = std::tanh(b[k]);
        dot += ta * tb;
        na += ta * ta;
        nb += tb * tb;
    }
    if (na <= kZeroNormEps * kZeroNormEps || nb <= kZeroNormEps * kZeroNormEps) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return dot / std::sqrt(na * nb);
}

} // namespace detail

inline SimilarityGrid cell_similarities(const Matrix& line_f, const Matrix& query_f,
                                        bool* degenerate = nullptr) {
    if (line_f.cols != query_f.cols) throw ArgumentError("cell_similarities: C mismatch");
    SimilarityGrid grid;
    grid.cells = Matrix(line_f.rows, query_f.rows);
    for (int x = 0; x < line_f.rows; ++x)
        for (int y = 0; y < query_f.rows; ++y)
            grid.cells(x, y) = detail::row_cosine(line_f.row(x), query_f.row(y), line_f.cols, degenerate);
    return grid;
}

struct DpmaResult {
    std::vector<int> path;     // line row index x(y) per query position y
    double cumulative_score = 0.0;
    Matrix matched_feature;    // rows of line_f along the path
};

// Best non-decreasing assignment of one line row per query position,
// maximizing the cumulative cell similarity. Ties (in the running
// prefix max and in the final column) break toward the smallest x.
inline DpmaResult dpma_on_grid(const Matrix& cells, const Matrix& line_f) {
    const int tx = cells.rows;
    const int ty = cells.cols;
    Matrix score(tx, ty);
    // arg(x, y): row achieving the prefix max of column y-1 over [0, x]
    std::vector<std::vector<int>> arg(static_cast<std::size_t>(tx),
                                      std::vector<int>(static_cast<std::size_t>(ty), 0));
    for (int x = 0; x < tx; ++x) score(x, 0) = cells(x, 0);
    for (int y = 1; y < ty; ++y) {
        double best = score(0, y - 1);
        int best_x = 0;
        for (int x = 0; x < tx; ++x) {
            if (x > 0 && score(x, y - 1) > best) { // strict: smallest index wins ties
                best = score(x, y - 1);
                best_x = x;
            }
            score(x, y) = best + cells(x, y);
            arg[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = best_x;
        }
    }
    DpmaResult res;
    res.path.resize(static_cast<std::size_t>(ty));
    int x_end = 0;
    for (int x = 1; x < tx; ++x)
        if (score(x, ty - 1) > score(x_end, ty - 1)) x_end = x;
    res.cumulative_score = score(x_end, ty - 1);
    res.path[static_cast<std::size_t>(ty - 1)] = x_end;
    for (int y = ty - 1; y > 0; --y) {
        x_end = arg[static_cast<std::size_t>(x_end)][static_cast<std::size_t>(y)];
        res.path[static_cast<std::size_t>(y - 1)] = x_end;
    }
    res.matched_feature = Matrix(ty, line_f.cols);
    for (int y = 0; y < ty; ++y)
        std::memcpy(res.matched_feature.row(y), line_f.row(res.path[static_cast<std::size_t>(y)]),
                    sizeof(double) * static_cast<std::size_t>(line_f.cols));
    return res;
}

inline DpmaResult dpma(const Matrix& line_f, const Matrix& query_f) {
    if (!line_f.same_shape(query_f)) throw ArgumentError("dpma: shape mismatch");
    return dpma_on_grid(cell_similarities(line_f, query_f).cells, line_f);
}

// Per-row tanh cache of a sequence feature. The tanh transform is
// query independent, so galleries precompute it once per line; scoring
// then reduces to dot products.
struct TanhRows {
    Matrix rows;                  // tanh of the feature rows
    std::vector<double> norm_sq;  // squared norm per row
    double flat_norm = 0.0;       // norm of the full flattened vector

    TanhRows() = default;
    explicit TanhRows(const Matrix& f) : rows(f.rows, f.cols) {
        norm_sq.resize(static_cast<std::size_t>(f.rows));
        double total = 0.0;
        for (int r = 0; r < f.rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < f.cols; ++c) {
                const double u = std::tanh(f(r, c));
                rows(r, c) = u;
                s += u * u;
            }
            norm_sq[static_cast<std::size_t>(r)] = s;
            total += s;
        }
        flat_norm = std::sqrt(total);
    }
};

// DPMA partial similarity over cached tanh rows: identical recurrence
// and tie rules as dpma(), with the grid built from raw dot products.
inline double dpma_partial_cached(const TanhRows& line, const TanhRows& query) {
    if (line.rows.cols != query.rows.cols) throw ArgumentError("dpma: shape mismatch");
    if (line.flat_norm <= kZeroNormEps || query.flat_norm <= kZeroNormEps) return 0.0;
    const int tx = line.rows.rows;
    const int ty = query.rows.rows;
    const int c = line.rows.cols;
    std::vector<double> dots(static_cast<std::size_t>(tx) * ty);
    std::vector<double> cells(static_cast<std::size_t>(tx) * ty);
    for (int x = 0; x < tx; ++x) {
        const double* lr = line.rows.row(x);
        for (int y = 0; y < ty; ++y) {
            const double* qr = query.rows.row(y);
            double d = 0.0;
            for (int k = 0; k < c; ++k) d += lr[k] * qr[k];
            dots[static_cast<std::size_t>(x) * ty + y] = d;
            // bit-identical to detail::row_cosine so tie-breaks agree
            const double na = line.norm_sq[static_cast<std::size_t>(x)];
            const double nb = query.norm_sq[static_cast<std::size_t>(y)];
            cells[static_cast<std::size_t>(x) * ty + y] =
                (na <= kZeroNormEps * kZeroNormEps || nb <= kZeroNormEps * kZeroNormEps)
                    ? 0.0
                    : d / std::sqrt(na * nb);
        }
    }
    std::vector<double> score(static_cast<std::size_t>(tx) * ty);
    std::vector<int> arg(static_cast<std::size_t>(tx) * ty, 0);
    for (int x = 0; x < tx; ++x) score[static_cast<std::size_t>(x) * ty] = cells[static_cast<std::size_t>(x) * ty];
    for (int y = 1; y < ty; ++y) {
        double best = score[0 * ty + static_cast<std::size_t>(y - 1)];
        int best_x = 0;
        for (int x = 0; x < tx; ++x) {
            if (x > 0 && score[static_cast<std::size_t>(x) * ty + y - 1] > best) {
                best = score[static_cast<std::size_t>(x) * ty + y - 1];
                best_x = x;
            }
            score[static_cast<std::size_t>(x) * ty + y] = best + cells[static_cast<std::size_t>(x) * ty + y];
            arg[static_cast<std::size_t>(x) * ty + y] = best_x;
        }
    }
    int x_end = 0;
    for (int x = 1; x < tx; ++x)
        if (score[static_cast<std::size_t>(x) * ty + ty - 1] >
            score[static_cast<std::size_t>(x_end) * ty + ty - 1])
            x_end = x;
    double dot_sum = 0.0;
    double line_norm_sq = 0.0;
    int x = x_end;
    for (int y = ty - 1; y >= 0; --y) {
        dot_sum += dots[static_cast<std::size_t>(x) * ty + y];
        line_norm_sq += line.norm_sq[static_cast<std::size_t>(x)];
        if (y > 0) x = arg[static_cast<std::size_t>(x) * ty + y];
    }
    if (line_norm_sq <= kZeroNormEps * kZeroNormEps) return 0.0;
    return dot_sum / (std::sqrt(line_norm_sq) * query.flat_norm);
}

// Similarity of the DPMA-assembled partial feature with the query.
inline double partial_similarity(const Matrix& line_f, const Matrix& query_f,
                                 bool* degenerate = nullptr) {
    return sim_f(dpma(line_f, query_f).matched_feature, query_f, degenerate);
}

} // namespace pstr
