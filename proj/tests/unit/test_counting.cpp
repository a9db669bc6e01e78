#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fracspec/counting.hpp"
#include "fracspec/errors.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <random>

using namespace fracspec;
using namespace fracspec::counting;
using testing::diag_pencil;
using testing::random_pencil;

namespace {

std::size_t oracle_geq(const std::vector<double>& sorted, double a) {
    return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), a));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

} // namespace

TEST_SUITE("exact counting") {
    TEST_CASE("diagonal pencil") {
        const auto p = diag_pencil({1, 2, 3, 4});
        CHECK(count_geq_exact(*p, 2.5) == 2);
        CHECK(count_geq_exact(*p, 0.0) == 4);
        CHECK(count_geq_exact(*p, 9.0) == 0);
    }

    TEST_CASE("eigenvalue on the shift counts as above") {
        const auto p = diag_pencil({1, 2, 3, 4});
        CHECK(count_geq_exact(*p, 2.0) == 3);
        linalg::ShiftedFactorizer fz(p);
        InertiaCounter counter(fz, 4.0);
        const auto r = counter.count_geq(3.0);
        CHECK(r.count == 2);
        CHECK(r.perturbations >= 1);
        CHECK(r.shift < 3.0);
    }

    TEST_CASE("intervals are half open") {
        const auto p = diag_pencil({1, 2, 3, 4, 5, 6});
        CHECK(count_in_interval(*p, 2.5, 5.5) == 3);
        CHECK(count_in_interval(*p, 3.0, 3.0) == 0);
        CHECK(count_in_interval(*p, 2.0, 4.0) == 2);
        CHECK_THROWS_AS(count_in_interval(*p, 4.0, 2.0), InvalidArgument);
    }

    TEST_CASE("unit square midpoint count matches the oracle") {
        const auto a = testing::unit_square(2, 8);
        const auto eig = linalg::dense_generalized_eig(a.pencil(), {.compute_vectors = false});
        // The spectrum midpoint itself carries a degenerate pair, so use the central gap.
        std::size_t h = eig.values.size() / 2;
        while (eig.values[h] - eig.values[h - 1] < 1e-6 * eig.values[h])
            ++h;
        const double mid = 0.5 * (eig.values[h - 1] + eig.values[h]);
        CHECK(count_geq_exact(a.pencil(), mid) == oracle_geq(eig.values, mid));
        CHECK(count_in_interval(a.pencil(), 0.0, 1.01 * eig.values.back()) == a.size());
    }

    TEST_CASE("monotone, additive and exact on a random pencil") {
        const auto p = random_pencil(150, 31);
        const auto eig = linalg::dense_generalized_eig(*p, {.compute_vectors = false});
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(eig.values.front() - 0.5, eig.values.back() + 0.5);
        std::vector<double> shifts(40);
        for (auto& s : shifts)
            s = u(rng);
        std::sort(shifts.begin(), shifts.end());
        linalg::ShiftedFactorizer fz(p);
        InertiaCounter counter(fz, default_perturbation_scale(*p), 4);
        const auto counts = counter.count_round(shifts);
        CHECK(counter.stats().rounds == 1);
        CHECK(counter.stats().factorizations == shifts.size());
        for (std::size_t i = 0; i < shifts.size(); ++i) {
            CHECK(counts[i].count == oracle_geq(eig.values, shifts[i]));
            if (i > 0)
                CHECK(counts[i].count <= counts[i - 1].count);
        }
        for (std::size_t i = 0; i + 2 < shifts.size(); i += 3) {
            const double a = shifts[i], b = shifts[i + 1], c = shifts[i + 2];
            CHECK(count_in_interval(*p, a, b) + count_in_interval(*p, b, c) == count_in_interval(*p, a, c));
        }
    }
}

TEST_SUITE("chebyshev filter") {
    TEST_CASE("centered step has mean one half") {
        const auto f = chebyshev_step_coeffs(0.0, {-1.0, 1.0}, 1, Damping::None);
        CHECK(f.coefficients()[0] == doctest::Approx(0.5));
        CHECK(f.degree() == 1);
    }

    TEST_CASE("high degree filter approaches the step") {
        const double lo = 0.0, hi = 10.0, a = 4.0;
        const auto f = chebyshev_step_coeffs(a, {lo, hi}, 512, Damping::None);
        CHECK(std::abs(f.evaluate(a + 0.3 * (hi - lo)) - 1.0) <= 0.05);
        CHECK(std::abs(f.evaluate(a - 0.3 * (hi - lo))) <= 0.05);
    }

    TEST_CASE("a outside the bounds is rejected") {
        CHECK_THROWS_AS(chebyshev_step_coeffs(11.0, {0.0, 10.0}, 16, Damping::None), InvalidArgument);
        CHECK_THROWS_AS(chebyshev_step_coeffs(1.0, {0.0, 10.0}, 0, Damping::None), InvalidArgument);
    }

    TEST_CASE("undamped filter goes negative, Jackson damping reduces monotonicity violations") {
        const auto plain = chebyshev_step_coeffs(0.3, {-1.0, 1.0}, 256, Damping::None);
        const auto damped = chebyshev_step_coeffs(0.3, {-1.0, 1.0}, 256, Damping::Jackson);
        double min_plain = 1.0, viol_plain = 0.0, viol_damped = 0.0;
        double prev_p = plain.evaluate(-1.0), prev_d = damped.evaluate(-1.0);
        for (int i = 1; i < 1000; ++i) {
            const double x = -1.0 + 2.0 * i / 999.0;
            const double vp = plain.evaluate(x), vd = damped.evaluate(x);
            min_plain = std::min(min_plain, vp);
            viol_plain += std::max(0.0, prev_p - vp);
            viol_damped += std::max(0.0, prev_d - vd);
            prev_p = vp;
            prev_d = vd;
        }
        CHECK(min_plain < 0.0);
        CHECK(viol_damped < viol_plain);
    }

    TEST_CASE("Jackson factors") {
        const auto g = jackson_factors(64);
        CHECK(g.size() == 65);
        CHECK(g[0] == doctest::Approx(1.0));
        for (std::size_t k = 1; k < g.size(); ++k)
            CHECK(g[k] <= g[k - 1] + 1e-15);
    }
}

TEST_SUITE("kpm") {
    TEST_CASE("deterministic trace on a diagonal pencil") {
        const auto p = diag_pencil({1, 2, 3, 4});
        linalg::ShiftedFactorizer fz(p);
        KpmOptions opt;
        opt.degree = 1024;
        opt.probes = 4;
        CHECK(std::abs(count_geq_kpm(fz, 2.5, opt) - 2.0) <= 0.5);
        CHECK(std::abs(count_geq_kpm(fz, 4.3, opt)) <= 0.5);
    }

    TEST_CASE("shifts outside the bounds") {
        const auto p = diag_pencil({1, 2, 3, 4});
        linalg::ShiftedFactorizer fz(p);
        KpmOptions opt;
        opt.bounds = std::pair{0.5, 4.5};
        CHECK(count_geq_kpm(fz, 0.0, opt) == doctest::Approx(4.0));
        CHECK(count_geq_kpm(fz, 10.0, opt) == doctest::Approx(0.0));
    }

    TEST_CASE("median error does not grow with degree") {
        const auto p = random_pencil(120, 41, true);
        linalg::ShiftedFactorizer fz(p);
        const auto eig = linalg::dense_generalized_eig(*p, {.compute_vectors = false});
        const std::pair<double, double> bounds{eig.values.front() - 0.01, eig.values.back() + 0.01};
        const auto moments = kpm_moments(fz, bounds, 1024, 120, 0);
        double prev = 1e300;
        for (int degree : {64, 256, 1024}) {
            std::vector<double> errs;
            for (int i = 0; i < 20; ++i) {
                const double a = bounds.first + (i + 0.5) / 20.0 * (bounds.second - bounds.first);
                const auto f = chebyshev_step_coeffs(a, bounds, degree, Damping::Jackson);
                const double est = kpm_count_from_moments(
                    std::span<const double>(moments.data(), static_cast<std::size_t>(degree) + 1), f);
                errs.push_back(std::abs(est - static_cast<double>(oracle_geq(eig.values, a))));
            }
            const double m = median(errs);
            CHECK(m <= prev);
            prev = m;
        }
    }

    TEST_CASE("stochastic estimate is seeded") {
        const auto p = random_pencil(600, 3, true);
        linalg::ShiftedFactorizer fz(p);
        KpmOptions opt;
        opt.degree = 64;
        opt.probes = 8;
        opt.seed = 12;
        const double a = count_geq_kpm(fz, static_cast<double>(600), opt);
        const double b = count_geq_kpm(fz, static_cast<double>(600), opt);
        CHECK(a == b);
        CHECK(std::isfinite(a));
    }
}
