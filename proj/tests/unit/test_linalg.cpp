#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fracspec/errors.hpp"
#include "fracspec/linalg.hpp"
#include "helpers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <random>

using namespace fracspec;
using namespace fracspec::linalg;
using testing::diag_pencil;
using testing::random_pencil;

namespace {

Eigen::MatrixXd as_dense(const SparseSymMatrix& a) {
    const auto d = a.to_dense();
    const auto n = static_cast<Eigen::Index>(a.n());
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(d.data(), n, n);
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v)
        x = g(rng);
    return v;
}

} // namespace

TEST_SUITE("sparse") {
    TEST_CASE("identity and diagonal products") {
        const auto i3 = SparseSymMatrix::identity(3);
        CHECK(spmv(i3, std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
        const std::vector<double> d{2, 3};
        CHECK(spmv(SparseSymMatrix::diagonal(d), std::vector<double>{1, 1}) == std::vector<double>{2, 3});
    }

    TEST_CASE("triplets fold lower entries and sum duplicates") {
        auto a = SparseSymMatrix::from_triplets(2, {{0, 0, 1.0}, {1, 0, 2.0}, {0, 1, 0.5}, {1, 1, 4.0}});
        CHECK(a.nnz() == 3);
        const auto d = a.to_dense();
        CHECK(d[1] == doctest::Approx(2.5));
        CHECK(d[2] == doctest::Approx(2.5));
        CHECK(a.norm1() == doctest::Approx(6.5));
    }

    TEST_CASE("malformed CSR is rejected") {
        CHECK_THROWS_AS(SparseSymMatrix(2, {0, 1, 2}, {0, 0}, {1.0, 1.0}), InvalidArgument);
        CHECK_THROWS_AS(SparseSymMatrix::from_triplets(2, {{0, 2, 1.0}}), InvalidArgument);
    }

    TEST_CASE("spmv rejects wrong lengths") {
        const auto a = SparseSymMatrix::identity(3);
        std::vector<double> x(2), y(3);
        CHECK_THROWS_AS(a.multiply(x, y), DimensionMismatch);
    }

    TEST_CASE("spmv is symmetric") {
        std::mt19937_64 rng(3);
        const auto p = random_pencil(40, 11);
        const auto x = random_vector(40, rng), y = random_vector(40, rng);
        const double xay = dot(x, spmv(p->stiffness(), y));
        const double yax = dot(y, spmv(p->stiffness(), x));
        CHECK(std::abs(xay - yax) <= 1e-12 * std::max(1.0, std::abs(xay)));
    }
}

TEST_SUITE("ldlt") {
    TEST_CASE("inertia of a diagonal pencil") {
        const auto p = diag_pencil({1, 2, 3});
        const auto f = ldlt_factor(*p, 2.5);
        CHECK(f.inertia().negative == 2);
        CHECK(f.inertia().zero == 0);
        CHECK(f.inertia().positive == 1);
        const auto g = ldlt_factor(*p, 0.0);
        CHECK(g.inertia().positive == 3);
    }

    TEST_CASE("shift on an eigenvalue raises ZeroPivot") {
        const auto p = diag_pencil({1, 2, 3});
        CHECK_THROWS_AS(ldlt_factor(*p, 2.0), ZeroPivot);
        FactorOptions opts;
        opts.record_zero_pivots = true;
        const auto f = ldlt_factor(*p, 2.0, opts);
        CHECK(f.inertia().zero == 1);
        CHECK_THROWS_AS(solve_factored(f, std::vector<double>{1, 1, 1}), SingularFactor);
    }

    TEST_CASE("diagonal solves") {
        const auto p = std::make_shared<const MatrixPencil>(
            SparseSymMatrix::diagonal(std::vector<double>{2, 2}), SparseSymMatrix::identity(2));
        auto x = solve_factored(ldlt_factor(*p, 0.0), std::vector<double>{2, 4});
        CHECK(x[0] == doctest::Approx(1.0));
        CHECK(x[1] == doctest::Approx(2.0));
        const auto q = diag_pencil({1, 3});
        x = solve_factored(ldlt_factor(*q, 2.0), std::vector<double>{1, 1});
        CHECK(x[0] == doctest::Approx(-1.0));
        CHECK(x[1] == doctest::Approx(1.0));
    }

    TEST_CASE("median shift splits a random pencil in half") {
        const auto p = random_pencil(50, 5);
        const auto eig = dense_generalized_eig(*p, {.compute_vectors = false});
        const double a = 0.5 * (eig.values[24] + eig.values[25]);
        CHECK(ldlt_factor(*p, a).inertia().positive == 25);
    }

    TEST_CASE("inertia agrees with the dense oracle over random shifts") {
        const auto p = random_pencil(200, 17);
        const auto eig = dense_generalized_eig(*p, {.compute_vectors = false});
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(eig.values.front() - 1.0, eig.values.back() + 1.0);
        for (Ordering ord : {Ordering::Natural, Ordering::ReverseCuthillMcKee, Ordering::MinimumDegree}) {
            FactorOptions opts;
            opts.ordering = ord;
            ShiftedFactorizer fz(p, opts);
            for (int t = 0; t < 100; ++t) {
                const double a = u(rng);
                const auto above = static_cast<std::size_t>(
                    eig.values.end() - std::upper_bound(eig.values.begin(), eig.values.end(), a));
                CHECK(fz.factor(a).inertia().positive == above);
            }
        }
    }

    TEST_CASE("LDL^T reconstructs the permuted shifted matrix") {
        const auto p = random_pencil(120, 23);
        for (Ordering ord : {Ordering::Natural, Ordering::ReverseCuthillMcKee, Ordering::MinimumDegree}) {
            FactorOptions opts;
            opts.ordering = ord;
            const double a = 0.37;
            const auto f = ldlt_factor(*p, a, opts);
            const auto n = static_cast<Eigen::Index>(p->n());
            Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n);
            for (std::size_t j = 0; j < p->n(); ++j)
                for (std::size_t q = f.l_offsets()[j]; q < f.l_offsets()[j + 1]; ++q)
                    l(static_cast<Eigen::Index>(f.l_rows()[q]), static_cast<Eigen::Index>(j)) = f.l_values()[q];
            const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(f.d().data(), n);
            const Eigen::MatrixXd a_full = as_dense(p->shifted(a));
            Eigen::MatrixXd pa(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j)
                    pa(i, j) = a_full(static_cast<Eigen::Index>(f.permutation()[static_cast<std::size_t>(i)]),
                                      static_cast<Eigen::Index>(f.permutation()[static_cast<std::size_t>(j)]));
            const double err = (l * d.asDiagonal() * l.transpose() - pa).norm();
            CHECK(err <= 1e-8 * a_full.norm());
        }
    }

    TEST_CASE("solve recovers the right-hand side") {
        std::mt19937_64 rng(7);
        const auto p = random_pencil(30, 8, true);
        const auto f = ldlt_factor(*p, 0.0);
        const auto b = random_vector(30, rng);
        const auto x = solve_factored(f, b);
        const Eigen::VectorXd ref = as_dense(p->stiffness()).lu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), 30));
        for (std::size_t i = 0; i < 30; ++i)
            CHECK(std::abs(x[i] - ref(static_cast<Eigen::Index>(i))) <= 1e-10 * ref.norm());
        const auto back = spmv(p->stiffness(), x);
        double r = 0.0;
        for (std::size_t i = 0; i < 30; ++i)
            r = std::max(r, std::abs(back[i] - b[i]));
        CHECK(r <= 1e-9 * norm2(b));
    }

    TEST_CASE("shifted factorizer counts factorizations") {
        const auto p = diag_pencil({1, 2, 3});
        ShiftedFactorizer fz(p);
        const auto before = factorization_count();
        (void)fz.factor(1.5);
        (void)fz.factor(2.5);
        CHECK(factorization_count() - before == 2);
    }

    TEST_CASE("reverse Cuthill-McKee returns a permutation") {
        const auto p = random_pencil(25, 2);
        auto perm = reverse_cuthill_mckee(p->stiffness());
        std::sort(perm.begin(), perm.end());
        for (std::size_t i = 0; i < perm.size(); ++i)
            CHECK(perm[i] == i);
    }
}

TEST_SUITE("dense oracle") {
    TEST_CASE("diagonal pencil") {
        const auto eig = dense_generalized_eig(*diag_pencil({3, 1, 2}));
        CHECK(eig.values == std::vector<double>{1, 2, 3});
    }

    TEST_CASE("vectors are M-orthonormal") {
        const auto p = random_pencil(60, 4);
        const auto eig = dense_generalized_eig(*p);
        const Eigen::Map<const Eigen::MatrixXd> v(eig.vectors.data(), 60, 60);
        const Eigen::MatrixXd g = v.transpose() * as_dense(p->mass()) * v;
        CHECK((g - Eigen::MatrixXd::Identity(60, 60)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::is_sorted(eig.values.begin(), eig.values.end()));
    }

    TEST_CASE("indefinite mass is rejected") {
        const auto p = std::make_shared<const MatrixPencil>(
            SparseSymMatrix::identity(2), SparseSymMatrix::diagonal(std::vector<double>{1, -1}));
        CHECK_THROWS_AS(dense_generalized_eig(*p), MassNotSPD);
    }

    TEST_CASE("size cap") {
        const auto p = diag_pencil({1, 2, 3});
        CHECK_THROWS_AS(dense_generalized_eig(*p, {.max_dimension = 2}), InvalidArgument);
    }
}
