#pragma once

// Gauss-Hermite and Gauss-Legendre node/weight tables (Newton iteration on
// the orthogonal-polynomial recurrences), used by the deterministic
// sigma-point quadrature and by test oracles.

#include <cmath>
#include <utility>
#include <vector>

namespace sensched {

struct QuadNode {
    double x;
    double w;
};

// Physicists' Gauss-Hermite rule: integrates f(x) exp(-x^2) on the real
// line; weights sum to sqrt(pi).
inline std::vector<QuadNode> gauss_hermite(int n) {
    constexpr double eps = 1e-14;
    constexpr double pim4 = 0.7511255444649425; // pi^(-1/4)
    std::vector<QuadNode> nodes(n);
    const int m = (n + 1) / 2;
    double z = 0.0, pp = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(n, 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * nodes[0].x;
        else if (i == 3)
            z = 1.91 * z - 0.91 * nodes[1].x;
        else
            z = 2.0 * z - nodes[i - 2].x;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= eps) break;
        }
        nodes[i] = {z, 2.0 / (pp * pp)};
        nodes[n - 1 - i] = {-z, nodes[i].w};
    }
    return nodes;
}

// Gauss-Legendre rule on [a, b].
inline std::vector<QuadNode> gauss_legendre(int n, double a, double b) {
    constexpr double eps = 1e-14;
    std::vector<QuadNode> nodes(n);
    const int m = (n + 1) / 2;
    const double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
    for (int i = 0; i < m; ++i) {
        double z = std::cos(3.141592653589793 * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= eps) break;
        }
        nodes[i] = {xm - xl * z, 2.0 * xl / ((1.0 - z * z) * pp * pp)};
        nodes[n - 1 - i] = {xm + xl * z, nodes[i].w};
    }
    return nodes;
}

} // namespace sensched
