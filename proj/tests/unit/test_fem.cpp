#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"
#include "helpers.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace fracspec;
using namespace fracspec::fem;
using std::numbers::pi;
using testing::unit_interval;
using testing::unit_square;

TEST_SUITE("mesh") {
    TEST_CASE("structured meshes") {
        const auto m1 = build_mesh(1, 2);
        CHECK(m1.vertex_count() == 3);
        CHECK(m1.element_count() == 2);
        CHECK(m1.vertex(1).x == doctest::Approx(0.5));
        const auto m2 = build_mesh(2, 1);
        CHECK(m2.vertex_count() == 4);
        CHECK(m2.element_count() == 1);
        const auto m8 = build_mesh(2, 8);
        CHECK(m8.vertex_count() == 81);
        CHECK(m8.element_count() == 64);
        CHECK(m8.measure() == doctest::Approx(1.0));
    }

    TEST_CASE("invalid parameters") {
        CHECK_THROWS_AS(build_mesh(3, 2), InvalidArgument);
        CHECK_THROWS_AS(build_mesh(2, 0), InvalidArgument);
    }

    TEST_CASE("text round trip") {
        const auto m = build_mesh(2, 3);
        std::stringstream s;
        write_mesh(s, m);
        const auto back = read_mesh(s);
        CHECK(back.vertex_count() == m.vertex_count());
        CHECK(back.elements == m.elements);
        CHECK(back.measure() == doctest::Approx(1.0));
    }

    TEST_CASE("imported mesh assembles to the same pencil") {
        const auto m = build_mesh(2, 3);
        std::stringstream s;
        write_mesh(s, m);
        const auto a = assemble(read_mesh(s), {2}, BoundaryCondition::Dirichlet);
        const auto b = assemble(m, {2}, BoundaryCondition::Dirichlet);
        CHECK(a.size() == b.size());
        const auto ea = linalg::dense_generalized_eig(a.pencil(), {.compute_vectors = false});
        const auto eb = linalg::dense_generalized_eig(b.pencil(), {.compute_vectors = false});
        for (std::size_t i = 0; i < ea.values.size(); ++i)
            CHECK(ea.values[i] == doctest::Approx(eb.values[i]).epsilon(1e-10));
    }

    TEST_CASE("nonconforming input is rejected") {
        std::stringstream hanging("2 5 1\n0 0\n1 0\n1 1\n0 1\n0.5 0\n0 1 2 3\n");
        CHECK_THROWS_AS(read_mesh(hanging), InvalidArgument);
        std::stringstream bad_ref("1 2 1\n0\n1\n0 5\n");
        CHECK_THROWS_AS(read_mesh(bad_ref), InvalidArgument);
        std::stringstream truncated("2 4 1\n0 0\n1 0\n");
        CHECK_THROWS_AS(read_mesh(truncated), InvalidArgument);
    }

    TEST_CASE("boundary condition names") {
        CHECK(parse_boundary_condition("dirichlet") == BoundaryCondition::Dirichlet);
        CHECK(to_string(BoundaryCondition::Neumann) == "neumann");
        CHECK_THROWS_AS(parse_boundary_condition("robin"), InvalidArgument);
    }
}

TEST_SUITE("assembly") {
    TEST_CASE("two linear elements on the unit interval") {
        const auto a = unit_interval(1, 2);
        REQUIRE(a.size() == 1);
        CHECK(a.pencil().stiffness().values()[0] == doctest::Approx(4.0));
        CHECK(a.pencil().mass().values()[0] == doctest::Approx(1.0 / 3.0));
        const auto eig = linalg::dense_generalized_eig(a.pencil());
        CHECK(eig.values[0] == doctest::Approx(12.0));
        const std::vector<double> one{1.0};
        CHECK(inner_product(one, one, a) == doctest::Approx(1.0 / 3.0));
    }

    TEST_CASE("Neumann patch test and total mass") {
        for (int dim : {1, 2})
            for (int p : {1, 3, 6}) {
                const auto a = assemble(build_mesh(dim, 4), {p}, BoundaryCondition::Neumann);
                const std::vector<double> ones(a.size(), 1.0);
                const auto k1 = linalg::spmv(a.pencil().stiffness(), ones);
                for (double v : k1)
                    CHECK(std::abs(v) <= 1e-10);
                CHECK(inner_product(ones, ones, a) == doctest::Approx(1.0).epsilon(1e-10));
            }
    }

    TEST_CASE("stiffness is positive semidefinite") {
        const auto a = unit_square(3, 4, BoundaryCondition::Neumann);
        std::mt19937_64 rng(1);
        std::normal_distribution<double> g;
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x(a.size());
            for (auto& v : x)
                v = g(rng);
            CHECK(linalg::dot(x, linalg::spmv(a.pencil().stiffness(), x)) >= -1e-10 * linalg::dot(x, x));
        }
    }

    TEST_CASE("lowest Dirichlet eigenvalue approaches 2 pi^2") {
        const double exact = 2.0 * pi * pi;
        const auto eig = linalg::dense_generalized_eig(unit_square(1, 8).pencil(), {.compute_vectors = false});
        CHECK(std::abs(eig.values[0] - exact) <= 0.02 * exact);
        double last = 1e300;
        for (std::size_t e : {2, 4, 8}) {
            const auto v = linalg::dense_generalized_eig(unit_square(2, e).pencil(), {.compute_vectors = false});
            const double err = std::abs(v.values[0] - exact);
            CHECK(err < last);
            last = err;
        }
    }

    TEST_CASE("dof counts") {
        CHECK(unit_square(3, 8).size() == 529);
        CHECK(unit_square(2, 8).size() == 225);
        CHECK(unit_square(1, 2, BoundaryCondition::Neumann).size() == 9);
        CHECK(unit_interval(1, 8).size() == 7);
    }

    TEST_CASE("hash depends on order and boundary condition") {
        CHECK(unit_square(2, 4).hash() == unit_square(2, 4).hash());
        CHECK(unit_square(2, 4).hash() != unit_square(3, 4).hash());
        CHECK(unit_square(2, 4).hash() != unit_square(2, 4, BoundaryCondition::Neumann).hash());
    }
}

TEST_SUITE("fields") {
    TEST_CASE("zero field") {
        const auto a = unit_square(2, 3);
        for (double v : project([](double, double) { return 0.0; }, a))
            CHECK(v == 0.0);
        const std::vector<double> zero(a.size(), 0.0);
        const std::vector<Point> pts{{0.3, 0.4}, {0.9, 0.1}};
        for (double v : evaluate(zero, a, pts))
            CHECK(v == 0.0);
    }

    TEST_CASE("projection reproduces a basis function") {
        const auto a = unit_interval(2, 3);
        const std::size_t j = 2;
        std::vector<double> delta(a.size(), 0.0);
        delta[j] = 1.0;
        const auto c = project(
            [&](double x, double) {
                const Point p{x, 0.0};
                return evaluate(delta, a, std::span<const Point>(&p, 1))[0];
            },
            a);
        for (std::size_t i = 0; i < c.size(); ++i)
            CHECK(c[i] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
    }

    TEST_CASE("linear field is exact on a Neumann mesh") {
        const auto a = unit_interval(1, 5, BoundaryCondition::Neumann);
        const auto c = project([](double x, double) { return x; }, a);
        std::vector<Point> pts;
        for (int i = 0; i <= 20; ++i)
            pts.push_back({i / 20.0, 0.0});
        const auto v = evaluate(c, a, pts);
        for (std::size_t i = 0; i < pts.size(); ++i)
            CHECK(std::abs(v[i] - pts[i].x) <= 1e-12);
    }

    TEST_CASE("sine mode accuracy") {
        const auto a = unit_interval(6, 8);
        const auto c = project([](double x, double) { return std::sin(pi * x); }, a);
        double err = 0.0;
        for (int i = 0; i <= 200; ++i) {
            const Point p{i / 200.0, 0.0};
            err = std::max(err, std::abs(evaluate(c, a, std::span<const Point>(&p, 1))[0] - std::sin(pi * p.x)));
        }
        CHECK(err <= 1e-7);
    }

    TEST_CASE("sine modes are orthogonal") {
        const auto a = unit_interval(6, 16);
        const auto u = project([](double x, double) { return std::sin(pi * x); }, a);
        const auto v = project([](double x, double) { return std::sin(2 * pi * x); }, a);
        CHECK(std::abs(inner_product(u, v, a)) <= 1e-8);
    }

    TEST_CASE("projection of the first Laplace mode") {
        const auto a = unit_square(4, 8);
        const ScalarField f = [](double x, double y) { return 2 * std::sin(pi * x) * std::sin(pi * y); };
        CHECK(l2_error(project(f, a), f, a) <= 1e-6);
        const std::vector<double> zero(a.size(), 0.0);
        CHECK(l2_error(zero, f, a) == doctest::Approx(1.0).epsilon(1e-10));
    }

    TEST_CASE("points outside the domain are rejected") {
        const auto a = unit_square(1, 2);
        const std::vector<double> zero(a.size(), 0.0);
        const std::vector<Point> pts{{1.5, 0.5}};
        CHECK_THROWS_AS(evaluate(zero, a, pts), InvalidArgument);
    }

    TEST_CASE("quadrature integrates the domain measure") {
        const auto a = unit_square(2, 3);
        double area = 0.0;
        for_each_quadrature_point(a, 4, [&](double, double, double w) { area += w; });
        CHECK(area == doctest::Approx(1.0));
    }
}
