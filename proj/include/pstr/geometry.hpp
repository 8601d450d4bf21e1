#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pstr/common.hpp"

namespace pstr {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double dist(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// A text-line band: paired upper/lower chains with equal point counts.
// The chains are treated as piecewise-linear curves everywhere.
struct BoundaryPolygon {
    std::vector<Point> upper;
    std::vector<Point> lower;

    int pair_count() const { return static_cast<int>(upper.size()); }
};

inline double chain_arc_length(const std::vector<Point>& chain) {
    double len = 0.0;
    for (std::size_t i = 1; i < chain.size(); ++i) len += dist(chain[i - 1], chain[i]);
    return len;
}

inline double arc_length(const BoundaryPolygon& poly) {
    return chain_arc_length(poly.upper);
}

namespace detail {

// Point at arc length s along a polyline, s clamped to [0, total].
inline Point point_at_arclen(const std::vector<Point>& chain, double s) {
    if (s <= 0.0) return chain.front();
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const double seg = dist(chain[i - 1], chain[i]);
        if (s <= seg || i + 1 == chain.size()) {
            if (seg <= 0.0) return chain[i];
            const double t = std::min(s / seg, 1.0);
            return {chain[i - 1].x + t * (chain[i].x - chain[i - 1].x),
                    chain[i - 1].y + t * (chain[i].y - chain[i - 1].y)};
        }
        s -= seg;
    }
    return chain.back();
}

inline std::vector<Point> resample_chain(const std::vector<Point>& chain, int k_out) {
    const double total = chain_arc_length(chain);
    if (total <= 0.0) throw GeometryError("degenerate chain: zero arc length");
    std::vector<Point> out(static_cast<std::size_t>(k_out));
    for (int i = 0; i < k_out; ++i) {
        const double s = total * static_cast<double>(i) / (k_out - 1);
        out[static_cast<std::size_t>(i)] = point_at_arclen(chain, s);
    }
    out.front() = chain.front();
    out.back() = chain.back();
    return out;
}

// Sub-polyline between two fractional arc-length positions, keeping the
// interior vertices that fall inside the interval.
inline std::vector<Point> slice_chain(const std::vector<Point>& chain, double a_frac, double b_frac) {
    const double total = chain_arc_length(chain);
    if (total <= 0.0) throw GeometryError("degenerate chain: zero arc length");
    const double sa = a_frac * total;
    const double sb = b_frac * total;
    std::vector<Point> out;
    out.push_back(point_at_arclen(chain, sa));
    double acc = 0.0;
    for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
        acc += dist(chain[i - 1], chain[i]);
        if (acc > sa && acc < sb) out.push_back(chain[i]);
    }
    out.push_back(point_at_arclen(chain, sb));
    return out;
}

} // namespace detail

inline void validate_polygon(const BoundaryPolygon& poly) {
    if (poly.upper.size() != poly.lower.size())
        throw GeometryError("polygon chains must have equal point counts");
    if (poly.upper.size() < 2) throw GeometryError("polygon needs at least 2 point pairs");
}

// Resamples both chains to k_out equidistantly spaced points (in arc
// length along each chain). First/last pairs coincide with the input
// endpoints.
inline BoundaryPolygon tpga_resample(const BoundaryPolygon& poly, int k_out) {
    validate_polygon(poly);
    if (k_out < 2) throw ArgumentError("tpga_resample: k_out must be >= 2");
    BoundaryPolygon out;
    out.upper = detail::resample_chain(poly.upper, k_out);
    out.lower = detail::resample_chain(poly.lower, k_out);
    return out;
}

// Sub-band between two fractional arc-length positions, resampled back
// to the input's pair count. Fractions are applied to each chain's own
// arc length; for the straight and gently curved bands used here the two
// parameterizations agree.
inline BoundaryPolygon slice_window(const BoundaryPolygon& poly, double start_frac, double end_frac) {
    validate_polygon(poly);
    if (!(start_frac >= 0.0 && start_frac <= 1.0))
        throw ArgumentError("slice_window: start_frac out of [0,1]");
    if (!(end_frac > start_frac && end_frac <= 1.0))
        throw ArgumentError("slice_window: need start_frac < end_frac <= 1");
    const int k = poly.pair_count();
    BoundaryPolygon cut;
    cut.upper = detail::slice_chain(poly.upper, start_frac, end_frac);
    cut.lower = detail::slice_chain(poly.lower, start_frac, end_frac);
    BoundaryPolygon out;
    out.upper = detail::resample_chain(cut.upper, k);
    out.lower = detail::resample_chain(cut.lower, k);
    return out;
}

} // namespace pstr
