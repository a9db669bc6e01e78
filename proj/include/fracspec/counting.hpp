#pragma once

#include "fracspec/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace fracspec::counting {

/// Result of an inertia count; `shift` is the shift actually factored, which
/// differs from the requested one when a zero pivot forced a perturbation.
struct CountResult {
    std::size_t count = 0;
    double shift = 0.0;
    int perturbations = 0;
};

/// Sequential factorization rounds and total factorizations spent counting.
/// A round is one batch of counts issued concurrently.
struct RoundStats {
    std::size_t factorizations = 0;
    std::size_t rounds = 0;
};

/// Perturbation scale used when no spectral radius is known: the largest
/// ratio K_ii / M_ii.
double default_perturbation_scale(const linalg::MatrixPencil& pencil);

/// Exact counting by Sylvester inertia of K - aM. Eigenvalues equal to the
/// shift count as >= a. On a zero pivot the shift is moved down by
/// 1e-8 * scale (doubling, at most 3 attempts).
class InertiaCounter {
public:
    InertiaCounter(const linalg::ShiftedFactorizer& factorizer, double perturbation_scale,
                   std::size_t workers = 1);

    const linalg::ShiftedFactorizer& factorizer() const noexcept { return factorizer_; }
    double perturbation_scale() const noexcept { return scale_; }
    std::size_t workers() const noexcept { return workers_; }

    /// One round with a single factorization.
    CountResult count_geq(double shift);
    /// One round; the shifts are factored concurrently.
    std::vector<CountResult> count_round(std::span<const double> shifts);

    const RoundStats& stats() const noexcept { return stats_; }
    void reset_stats() noexcept { stats_ = {}; }

private:
    const linalg::ShiftedFactorizer& factorizer_;
    double scale_;
    std::size_t workers_;
    RoundStats stats_;
};

/// Number of eigenvalues >= a.
std::size_t count_geq_exact(const linalg::MatrixPencil& pencil, double a);
/// Number of eigenvalues in [lo, hi).
std::size_t count_in_interval(const linalg::MatrixPencil& pencil, double lo, double hi);

enum class Damping { None, Jackson };

/// Truncated Chebyshev expansion of the step H(x - a) on [lo, hi].
class ChebyshevFilter {
public:
    ChebyshevFilter(double step, double lo, double hi, std::vector<double> coefficients,
                    Damping damping);

    double step() const noexcept { return step_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    int degree() const noexcept { return static_cast<int>(coefficients_.size()) - 1; }
    Damping damping() const noexcept { return damping_; }
    /// Damped coefficients gamma_k, k = 0..degree.
    const std::vector<double>& coefficients() const noexcept { return coefficients_; }

    /// Filter value at x in [lo, hi] (Clenshaw recurrence).
    double evaluate(double x) const;

private:
    double step_;
    double lo_;
    double hi_;
    std::vector<double> coefficients_;
    Damping damping_;
};

ChebyshevFilter chebyshev_step_coeffs(double a, std::pair<double, double> bounds, int degree,
                                      Damping damping);

/// Jackson kernel factors g_k for k = 0..degree.
std::vector<double> jackson_factors(int degree);

struct KpmOptions {
    int degree = 512;
    int probes = 32;
    Damping damping = Damping::Jackson;
    std::uint64_t seed = 0;
    /// Spectrum enclosure; estimated by power iteration when absent.
    std::optional<std::pair<double, double>> bounds;
};

/// Chebyshev moments mu_k ~ tr T_k(B) of the scaled operator B = M^{-1} K on
/// [lo, hi]. Uses the exact unit-vector trace when n <= 512 and probes >= n,
/// otherwise a Rademacher (Hutchinson) estimate.
std::vector<double> kpm_moments(const linalg::ShiftedFactorizer& factorizer,
                                std::pair<double, double> bounds, int degree, int probes,
                                std::uint64_t seed);

/// Count estimate from precomputed moments for a given filter.
double kpm_count_from_moments(std::span<const double> moments, const ChebyshevFilter& filter);

/// Approximate number of eigenvalues >= a; not rounded.
double count_geq_kpm(const linalg::ShiftedFactorizer& factorizer, double a,
                     const KpmOptions& options = {});

} // namespace fracspec::counting
