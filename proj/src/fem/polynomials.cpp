#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"

#include <cmath>
#include <numbers>

namespace fracspec::fem {

namespace {

// Legendre P_n(x) and P_{n-1}(x) by the three-term recurrence.
void legendre(int n, double x, double& pn, double& pn1) {
    double p0 = 1.0, p1 = x;
    if (n == 0) {
        pn = 1.0;
        pn1 = 0.0;
        return;
    }
    for (int k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    pn = p1;
    pn1 = p0;
}

} // namespace

void gauss_legendre(int points, std::vector<double>& nodes, std::vector<double>& weights) {
    if (points < 1)
        throw InvalidArgument("Gauss-Legendre rule needs at least one point");
    nodes.assign(static_cast<std::size_t>(points), 0.0);
    weights.assign(static_cast<std::size_t>(points), 0.0);
    const int n = points;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p, pm1;
            legendre(n, x, p, pm1);
            dp = n * (x * p - pm1) / (x * x - 1.0);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double p, pm1;
        legendre(n, x, p, pm1);
        dp = n * (x * p - pm1) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[static_cast<std::size_t>(i)] = -x;
        nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    if (n % 2 == 1)
        nodes[static_cast<std::size_t>(n / 2)] = 0.0;
}

std::vector<double> gauss_lobatto_nodes(int order) {
    if (order < 1)
        throw InvalidArgument("basis order must be at least 1");
    const int p = order;
    std::vector<double> x(static_cast<std::size_t>(p + 1));
    x.front() = -1.0;
    x.back() = 1.0;
    // Interior nodes are the roots of P_p'.
    for (int i = 1; i < p; ++i) {
        double t = -std::cos(std::numbers::pi * i / p);
        for (int it = 0; it < 100; ++it) {
            double pn, pn1;
            legendre(p, t, pn, pn1);
            const double d1 = p * (t * pn - pn1) / (t * t - 1.0);
            const double d2 = (2.0 * t * d1 - p * (p + 1.0) * pn) / (1.0 - t * t);
            const double dt = d1 / d2;
            t -= dt;
            if (std::abs(dt) < 1e-16)
                break;
        }
        x[static_cast<std::size_t>(i)] = t;
    }
    // Enforce exact symmetry.
    for (int i = 0; i <= p / 2; ++i) {
        const double s = 0.5 * (x[static_cast<std::size_t>(p - i)] - x[static_cast<std::size_t>(i)]);
        x[static_cast<std::size_t>(i)] = -s;
        x[static_cast<std::size_t>(p - i)] = s;
    }
    if (p % 2 == 0)
        x[static_cast<std::size_t>(p / 2)] = 0.0;
    return x;
}

double lagrange(std::span<const double> nodes, std::size_t index, double x) {
    double v = 1.0;
    for (std::size_t j = 0; j < nodes.size(); ++j)
        if (j != index)
            v *= (x - nodes[j]) / (nodes[index] - nodes[j]);
    return v;
}

double lagrange_derivative(std::span<const double> nodes, std::size_t index, double x) {
    double sum = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (k == index)
            continue;
        double term = 1.0 / (nodes[index] - nodes[k]);
        for (std::size_t j = 0; j < nodes.size(); ++j)
            if (j != index && j != k)
                term *= (x - nodes[j]) / (nodes[index] - nodes[j]);
        sum += term;
    }
    return sum;
}

} // namespace fracspec::fem
