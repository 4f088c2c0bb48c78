#pragma once

// Regular simplex grid over the belief space (Lovejoy-style) and barycentric
// coordinates via the Freudenthal triangulation: any belief is expressed as a
// convex combination of at most n grid vertices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sensched/belief.hpp"
#include "sensched/errors.hpp"

namespace sensched {

struct BeliefGrid {
    int n = 0;
    int resolution = 0;                    // grid spacing 1/resolution
    std::vector<std::vector<int>> coords;  // integer coordinates, lexicographic
    std::vector<Belief> points;

    std::size_t size() const { return points.size(); }

    // Index of a grid point from integer coordinates (binary search over the
    // lexicographically sorted coordinate list).
    std::size_t index_of(const std::vector<int>& c) const {
        const auto it = std::lower_bound(coords.begin(), coords.end(), c);
        if (it == coords.end() || *it != c)
            throw DomainError("belief grid: coordinates not on the grid");
        return static_cast<std::size_t>(it - coords.begin());
    }
};

inline BeliefGrid build_grid(int n, int resolution) {
    BeliefGrid g;
    g.n = n;
    g.resolution = resolution;
    std::vector<int> c(n, 0);
    // Enumerate all compositions of `resolution` into n parts in lex order.
    const auto rec = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == n - 1) {
            c[pos] = remaining;
            g.coords.push_back(c);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            c[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    rec(rec, 0, resolution);
    g.points.reserve(g.coords.size());
    for (const auto& coord : g.coords) {
        std::vector<double> p(n);
        for (int i = 0; i < n; ++i) p[i] = static_cast<double>(coord[i]) / resolution;
        g.points.emplace_back(std::move(p));
    }
    return g;
}

struct BaryWeight {
    std::size_t index;
    double weight;
};

// Vertices and weights of the Freudenthal simplex containing p, computed in
// cumulative coordinates v_j = R * sum_{i>=j} p_i: take the integer corner,
// then add unit steps in order of decreasing fractional part. Fractional
// parts within 1e-13 of an integer are snapped so that grid points come back
// as a single unit-weight vertex.
inline std::vector<BaryWeight> barycentric_weights(const Belief& p, const BeliefGrid& grid) {
    const int n = grid.n;
    const int R = grid.resolution;
    std::vector<double> v(n + 1, 0.0);
    for (int j = n - 1; j >= 0; --j) v[j] = v[j + 1] + p[j] * R;
    v[0] = static_cast<double>(R); // exact by normalization

    std::vector<int> corner(n + 1, 0);
    std::vector<double> frac(n + 1, 0.0);
    corner[0] = R;
    for (int j = 1; j <= n; ++j) {
        double q = std::floor(v[j]);
        double d = v[j] - q;
        if (d < 1e-13) d = 0.0;
        else if (d > 1.0 - 1e-13) { q += 1.0; d = 0.0; }
        corner[j] = static_cast<int>(q);
        frac[j] = d;
    }

    // Coordinates 1..n sorted by descending fractional part; ties broken by
    // coordinate index so vertices stay inside the ordered region.
    std::vector<int> order;
    order.reserve(n);
    for (int j = 1; j <= n; ++j)
        if (frac[j] > 0.0) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });

    std::vector<BaryWeight> out;
    out.reserve(order.size() + 1);
    std::vector<int> vert = corner;
    std::vector<int> coord(n);
    const auto emit = [&](double w) {
        if (w <= 1e-15) return;
        for (int j = 0; j < n; ++j) coord[j] = vert[j] - vert[j + 1];
        out.push_back({grid.index_of(coord), w});
    };

    const double first = order.empty() ? 0.0 : frac[order[0]];
    emit(1.0 - first);
    for (std::size_t t = 0; t < order.size(); ++t) {
        vert[order[t]] += 1;
        const double next = (t + 1 < order.size()) ? frac[order[t + 1]] : 0.0;
        emit(frac[order[t]] - next);
    }
    return out;
}

// Piecewise-linear interpolation of per-grid-point values at p.
inline double interpolate(const Belief& p, const BeliefGrid& grid,
                          const std::vector<double>& values) {
    double acc = 0.0;
    for (const auto& [idx, w] : barycentric_weights(p, grid)) acc += w * values[idx];
    return acc;
}

} // namespace sensched
