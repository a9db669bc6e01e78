#include "fracspec/counting.hpp"

#include "fracspec/errors.hpp"
#include "fracspec/parallel.hpp"
#include "fracspec/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fracspec::counting {

using linalg::MatrixPencil;
using linalg::ShiftedFactorizer;

double default_perturbation_scale(const MatrixPencil& pencil) {
    double scale = 0.0;
    for (std::size_t i = 0; i < pencil.n(); ++i) {
        const double m = pencil.mass().diagonal_entry(i);
        if (m > 0.0)
            scale = std::max(scale, std::abs(pencil.stiffness().diagonal_entry(i)) / m);
    }
    return scale > 0.0 ? scale : 1.0;
}

namespace {

constexpr int kMaxPerturbations = 3;

CountResult count_with_retry(const ShiftedFactorizer& factorizer, double shift, double scale) {
    const double eps = 1e-8 * scale;
    for (int attempt = 0;; ++attempt) {
        // Moving the shift down keeps an eigenvalue sitting on it in the >= count.
        const double a = attempt == 0 ? shift : shift - eps * std::ldexp(1.0, attempt - 1);
        try {
            const auto f = factorizer.factor(a);
            return {f.inertia().positive + f.inertia().zero, a, attempt};
        } catch (const ZeroPivot&) {
            if (attempt >= kMaxPerturbations)
                throw;
        }
    }
}

} // namespace

InertiaCounter::InertiaCounter(const ShiftedFactorizer& factorizer, double perturbation_scale,
                               std::size_t workers)
    : factorizer_(factorizer),
      scale_(perturbation_scale > 0.0 ? perturbation_scale
                                      : default_perturbation_scale(factorizer.pencil())),
      workers_(std::max<std::size_t>(workers, 1)) {}

CountResult InertiaCounter::count_geq(double shift) {
    const double s[1] = {shift};
    return count_round(s).front();
}

std::vector<CountResult> InertiaCounter::count_round(std::span<const double> shifts) {
    std::vector<CountResult> out(shifts.size());
    if (shifts.empty())
        return out;
    parallel_for(shifts.size(), worker_count(std::min(workers_, shifts.size())), [&](std::size_t i) {
        out[i] = count_with_retry(factorizer_, shifts[i], scale_);
    });
    stats_.rounds += 1;
    for (const auto& r : out)
        stats_.factorizations += 1 + static_cast<std::size_t>(r.perturbations);
    return out;
}

std::size_t count_geq_exact(const MatrixPencil& pencil, double a) {
    auto shared = std::make_shared<const MatrixPencil>(pencil);
    ShiftedFactorizer factorizer(shared);
    return count_with_retry(factorizer, a, default_perturbation_scale(pencil)).count;
}

std::size_t count_in_interval(const MatrixPencil& pencil, double lo, double hi) {
    if (lo > hi)
        throw InvalidArgument("count_in_interval requires lo <= hi");
    if (lo == hi)
        return 0;
    auto shared = std::make_shared<const MatrixPencil>(pencil);
    ShiftedFactorizer factorizer(shared);
    const double scale = default_perturbation_scale(pencil);
    const auto below = count_with_retry(factorizer, lo, scale).count;
    const auto above = count_with_retry(factorizer, hi, scale).count;
    return below - above;
}

// ---------------------------------------------------------------------------
// Chebyshev filter

ChebyshevFilter::ChebyshevFilter(double step, double lo, double hi,
                                 std::vector<double> coefficients, Damping damping)
    : step_(step), lo_(lo), hi_(hi), coefficients_(std::move(coefficients)), damping_(damping) {
    if (!(lo < hi))
        throw InvalidArgument("filter bounds must satisfy lo < hi");
    if (coefficients_.empty())
        throw InvalidArgument("filter needs at least one coefficient");
}

double ChebyshevFilter::evaluate(double x) const {
    const double t = std::clamp((2.0 * x - (lo_ + hi_)) / (hi_ - lo_), -1.0, 1.0);
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t k = coefficients_.size(); k-- > 1;) {
        const double b0 = coefficients_[k] + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    return coefficients_[0] + t * b1 - b2;
}

std::vector<double> jackson_factors(int degree) {
    const double n = degree + 1.0;
    const double q = std::numbers::pi / (n + 1.0);
    std::vector<double> g(static_cast<std::size_t>(degree) + 1);
    for (int k = 0; k <= degree; ++k)
        g[static_cast<std::size_t>(k)] =
            ((n - k + 1.0) * std::cos(q * k) + std::sin(q * k) / std::tan(q)) / (n + 1.0);
    return g;
}

ChebyshevFilter chebyshev_step_coeffs(double a, std::pair<double, double> bounds, int degree,
                                      Damping damping) {
    const auto [lo, hi] = bounds;
    if (!(lo < hi))
        throw InvalidArgument("filter bounds must satisfy lo < hi");
    if (degree < 1)
        throw InvalidArgument("filter degree must be at least 1");
    if (a < lo || a > hi)
        throw InvalidArgument("step position lies outside the filter bounds");
    const double c = std::clamp((2.0 * a - (lo + hi)) / (hi - lo), -1.0, 1.0);
    const double phi = std::acos(c);
    std::vector<double> gamma(static_cast<std::size_t>(degree) + 1);
    gamma[0] = phi / std::numbers::pi;
    for (int k = 1; k <= degree; ++k)
        gamma[static_cast<std::size_t>(k)] = 2.0 * std::sin(k * phi) / (k * std::numbers::pi);
    if (damping == Damping::Jackson) {
        const auto g = jackson_factors(degree);
        for (std::size_t k = 0; k < gamma.size(); ++k)
            gamma[k] *= g[k];
    }
    return ChebyshevFilter(a, lo, hi, std::move(gamma), damping);
}

// ---------------------------------------------------------------------------
// Kernel polynomial counting

std::vector<double> kpm_moments(const ShiftedFactorizer& factorizer,
                                std::pair<double, double> bounds, int degree, int probes,
                                std::uint64_t seed) {
    if (degree < 1 || probes < 1)
        throw InvalidArgument("kpm requires degree >= 1 and probes >= 1");
    const auto [lo, hi] = bounds;
    if (!(lo < hi))
        throw InvalidArgument("kpm bounds must satisfy lo < hi");
    const auto& pencil = factorizer.pencil();
    const std::size_t n = pencil.n();
    const auto mass = factorizer.factor_mass();
    const bool exact = n <= 512 && static_cast<std::size_t>(probes) >= n;
    const std::size_t count = exact ? n : static_cast<std::size_t>(probes);

    // Probe vectors are drawn up front so the result is independent of scheduling.
    std::vector<linalg::Vector> starts(count, linalg::Vector(n, 0.0));
    std::mt19937_64 rng(seed);
    for (std::size_t p = 0; p < count; ++p) {
        if (exact) {
            starts[p][p] = 1.0;
        } else {
            for (double& v : starts[p])
                v = (rng() >> 63) ? 1.0 : -1.0;
        }
    }

    const double alpha = 2.0 / (hi - lo);
    const double beta = -(hi + lo) / (hi - lo);
    const auto kdeg = static_cast<std::size_t>(degree);
    std::vector<std::vector<double>> partial(count, std::vector<double>(kdeg + 1, 0.0));

    // y = (alpha M^{-1} K + beta) x
    auto apply = [&](const linalg::Vector& x, linalg::Vector& y) {
        pencil.stiffness().multiply(x, y);
        mass.solve_in_place(y);
        for (std::size_t i = 0; i < n; ++i)
            y[i] = alpha * y[i] + beta * x[i];
    };

    parallel_for(count, worker_count(count), [&](std::size_t p) {
        const auto& z = starts[p];
        auto& mu = partial[p];
        linalg::Vector prev = z, cur(n), next(n);
        mu[0] = linalg::dot(z, prev);
        apply(prev, cur);
        mu[1] = linalg::dot(z, cur);
        for (std::size_t k = 2; k <= kdeg; ++k) {
            apply(cur, next);
            for (std::size_t i = 0; i < n; ++i)
                next[i] = 2.0 * next[i] - prev[i];
            mu[k] = linalg::dot(z, next);
            std::swap(prev, cur);
            std::swap(cur, next);
        }
    });

    std::vector<double> moments(kdeg + 1, 0.0);
    for (const auto& mu : partial)
        for (std::size_t k = 0; k <= kdeg; ++k)
            moments[k] += mu[k];
    if (!exact)
        for (double& m : moments)
            m /= static_cast<double>(count);
    return moments;
}

double kpm_count_from_moments(std::span<const double> moments, const ChebyshevFilter& filter) {
    const auto& gamma = filter.coefficients();
    if (moments.size() < gamma.size())
        throw InvalidArgument("not enough Chebyshev moments for the filter degree");
    double total = 0.0;
    for (std::size_t k = 0; k < gamma.size(); ++k)
        total += gamma[k] * moments[k];
    return total;
}

double count_geq_kpm(const ShiftedFactorizer& factorizer, double a, const KpmOptions& options) {
    std::pair<double, double> bounds;
    if (options.bounds) {
        bounds = *options.bounds;
    } else {
        const auto sb = partition::estimate_spectral_radius(factorizer);
        bounds = {sb.lo, sb.hi};
    }
    // Shifts outside the enclosure have trivial filters.
    if (a <= bounds.first)
        return static_cast<double>(factorizer.pencil().n());
    if (a >= bounds.second)
        return 0.0;
    const auto moments = kpm_moments(factorizer, bounds, options.degree, options.probes, options.seed);
    return kpm_count_from_moments(moments,
                                  chebyshev_step_coeffs(a, bounds, options.degree, options.damping));
}

} // namespace fracspec::counting
