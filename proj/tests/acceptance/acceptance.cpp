// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include "fracspec/counting.hpp"
#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"
#include "fracspec/fracpde.hpp"
#include "fracspec/partition.hpp"
#include "fracspec/slicer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace fracspec;
using std::numbers::pi;

namespace {

// Tolerances and limits.
constexpr double kOracleRel = 1e-8;
constexpr double kOracleSeconds = 300.0;
constexpr double kExactL2 = 1e-8;
constexpr double kRoundoffFloor = 1e-10;
constexpr double kBalanceFactor = 1.25;
constexpr double kOrthonormality = 1e-8;
constexpr int kShifts = 100;
constexpr std::size_t kRandomN = 300;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fem::AssembledPencil square(int order, std::size_t elements) {
    return fem::assemble(fem::build_mesh(2, elements), {order}, fem::BoundaryCondition::Dirichlet);
}

struct Solved {
    slicer::EigenBasis basis;
    partition::PartitionPlan plan;
    double seconds = 0.0;
};

// Full pipeline: spectral radius, greedy partition, slice solves, post-processing.
Solved solve_full(const fem::AssembledPencil& a, std::size_t evaluators) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& fz = a.factorizer();
    const auto bounds = partition::estimate_spectral_radius(fz);
    partition::InertiaCounter counter(fz, bounds.hi, evaluators);
    Solved s;
    s.plan = partition::partition(bounds, evaluators, {}, counter);
    slicer::EvaluatorPool pool(evaluators);
    s.basis = slicer::solve_all(fz, s.plan, pool);
    s.basis.set_metadata(fracpde::metadata_for(a));
    s.seconds = seconds_since(t0);
    return s;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        return INFINITY;
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        e = std::max(e, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
    return e;
}

fem::ScalarField first_mode(double amplitude) {
    return [amplitude](double x, double y) { return amplitude * std::sin(pi * x) * std::sin(pi * y); };
}

std::vector<double> alpha_grid() {
    std::vector<double> a;
    for (int i = 0; i <= 10; ++i)
        a.push_back(0.2 * i);
    return a;
}

double poisson_error(const fem::AssembledPencil& a, const slicer::EigenBasis& basis, double alpha) {
    const auto f = fem::project(first_mode(2.0), a);
    const auto u = fracpde::solve_poisson(f, basis, alpha);
    return fracpde::error_norm(u, first_mode(2.0 * std::pow(2 * pi * pi, -alpha / 2)), a);
}

double diffusion_error(const fem::AssembledPencil& a, const slicer::EigenBasis& basis, double alpha) {
    const double mu = 1.0, t = 0.4;
    const auto u0 = fem::project(first_mode(2.0), a);
    const auto u = fracpde::solve_diffusion(u0, basis, alpha, mu, t);
    const double rate = alpha == 0.0 ? 1.0 : std::pow(2 * pi * pi, alpha / 2);
    return fracpde::error_norm(u, first_mode(2.0 * std::exp(-mu * rate * t)), a);
}

// 1: slice solves reproduce the dense spectrum for every evaluator count.
Outcome oracle_equivalence() {
    const auto a = square(3, 8);
    const auto oracle = linalg::dense_generalized_eig(a.pencil(), {.compute_vectors = false});
    Outcome o{true, "N=" + std::to_string(a.size())};
    for (std::size_t p : {1u, 2u, 4u, 8u}) {
        const auto s = solve_full(a, p);
        const double err = max_rel_diff(s.basis.values(), oracle.values);
        o.pass = o.pass && err <= kOracleRel && s.seconds <= kOracleSeconds;
        o.detail += " P=" + std::to_string(p) + ":" + fmt("%.1e", err) + fmt("/%.2fs", s.seconds);
    }
    return o;
}

struct FineBasis {
    fem::AssembledPencil a = square(8, 16);
    Solved s;
    FineBasis() { s = solve_full(a, 4); }
};

FineBasis& fine() {
    static FineBasis f;
    return f;
}

// 2: fractional Poisson against the closed form.
Outcome poisson_exactness() {
    auto& f = fine();
    double worst = 0.0;
    for (double alpha : alpha_grid())
        worst = std::max(worst, poisson_error(f.a, f.s.basis, alpha));
    return {worst <= kExactL2, "N=" + std::to_string(f.a.size()) + fmt(" solve %.0fs", f.s.seconds) +
                                   fmt(" max L2 %.2e", worst)};
}

// 3: fractional diffusion against the closed form.
Outcome diffusion_exactness() {
    auto& f = fine();
    double worst = 0.0;
    for (double alpha : alpha_grid())
        worst = std::max(worst, diffusion_error(f.a, f.s.basis, alpha));
    return {worst <= kExactL2, fmt("max L2 %.2e", worst)};
}

// 4: errors fall with the order until they reach round-off.
Outcome order_convergence() {
    const std::vector<double> alphas{0.4, 1.0, 1.6};
    std::vector<std::vector<double>> err(alphas.size());
    for (int p = 1; p <= 8; ++p) {
        const auto a = square(p, 8);
        const auto s = solve_full(a, 4);
        for (std::size_t i = 0; i < alphas.size(); ++i)
            err[i].push_back(poisson_error(a, s.basis, alphas[i]));
    }
    Outcome o{true, ""};
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const auto& e = err[i];
        bool ok = true;
        bool floor = false;
        for (std::size_t k = 1; k < e.size(); ++k) {
            floor = floor || e[k - 1] <= kRoundoffFloor;
            if (floor ? e[k] > kRoundoffFloor : !(e[k] < e[k - 1]))
                ok = false;
        }
        o.pass = o.pass && ok;
        o.detail += fmt(" a=%.1f:", alphas[i]) + fmt("%.1e", e.front()) + fmt("->%.1e", e.back());
    }
    return o;
}

// 5: inertia counts on a random pencil.
Outcome counting_exactness() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<linalg::Triplet> k, m;
    const std::size_t n = kRandomN;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            k.push_back({i, j, u(rng)});
            if (j > i)
                m.push_back({i, j, 0.1 * u(rng) / static_cast<double>(n)});
        }
        m.push_back({i, i, 1.0 + 0.5 * std::abs(u(rng))});
    }
    const linalg::MatrixPencil pencil(linalg::SparseSymMatrix::from_triplets(n, k),
                                      linalg::SparseSymMatrix::from_triplets(n, m));
    const auto eig = linalg::dense_generalized_eig(pencil, {.compute_vectors = false});
    std::uniform_real_distribution<double> shift(eig.values.front() - 1.0, eig.values.back() + 1.0);
    int agree = 0;
    for (int t = 0; t < kShifts; ++t) {
        const double a = shift(rng);
        const auto want = static_cast<std::size_t>(eig.values.end() -
                                                   std::lower_bound(eig.values.begin(), eig.values.end(), a));
        agree += counting::count_geq_exact(pencil, a) == want ? 1 : 0;
    }
    return {agree == kShifts, std::to_string(agree) + "/" + std::to_string(kShifts) + " shifts agree"};
}

// 6: greedy refinement balances the unit square spectrum.
Outcome partition_balance() {
    const auto a = square(3, 8);
    const std::size_t p = 8;
    const auto bounds = partition::estimate_spectral_radius(a.factorizer());
    partition::InertiaCounter counter(a.factorizer(), bounds.hi, p);
    const auto uniform = partition::partition_uniform(bounds, p, counter);
    const auto plan = partition::partition(bounds, p, {}, counter);
    const double ideal = static_cast<double>(a.size()) / static_cast<double>(p);
    const bool ok = static_cast<double>(plan.max_load()) <= kBalanceFactor * ideal &&
                    uniform.max_load() > plan.max_load();
    return {ok, "uniform max " + std::to_string(uniform.max_load()) + ", refined max " +
                    std::to_string(plan.max_load()) + fmt(", ideal %.1f", ideal)};
}

// 7: sequential counting rounds for the greedy and tree pipelines.
Outcome round_accounting() {
    const auto a = square(3, 8);
    const partition::RefinementParams params;
    const std::size_t budget = static_cast<std::size_t>(params.n_a + 2 * params.n_b * params.n_c);
    const auto bounds = partition::estimate_spectral_radius(a.factorizer());
    Outcome o{true, "budget " + std::to_string(budget) + ";"};
    std::size_t prev_tree = 0;
    for (std::size_t p : {2u, 4u, 8u, 16u}) {
        partition::InertiaCounter greedy(a.factorizer(), bounds.hi, p);
        (void)partition::partition(bounds, p, params, greedy);
        partition::InertiaCounter tree(a.factorizer(), bounds.hi, p);
        (void)partition::partition_tree(bounds, p, params.n_c, tree);
        const auto levels = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(p))));
        const std::size_t tree_rounds = tree.stats().rounds;
        o.pass = o.pass && greedy.stats().rounds <= budget &&
                 tree_rounds <= 1 + levels * static_cast<std::size_t>(params.n_c) && tree_rounds > prev_tree &&
                 tree_rounds >= 1 + levels;
        prev_tree = tree_rounds;
        o.detail += " P=" + std::to_string(p) + " greedy " + std::to_string(greedy.stats().rounds) + " tree " +
                    std::to_string(tree_rounds);
    }
    return o;
}

// 8: M-orthonormality of a unit square basis with degenerate pairs.
Outcome orthonormality() {
    double worst = 0.0;
    std::string detail;
    for (int p : {3, 8}) {
        const auto a = square(p, 8);
        const auto s = solve_full(a, 4);
        const double e = slicer::orthonormality_error(s.basis);
        worst = std::max(worst, e);
        detail += " p=" + std::to_string(p) + ":" + fmt("%.1e", e);
    }
    return {worst <= kOrthonormality, detail};
}

// 9: KPM error falls with degree; the undamped filter dips below zero.
Outcome kpm_behaviour() {
    const auto a = square(2, 8);
    const auto& fz = a.factorizer();
    const auto eig = linalg::dense_generalized_eig(a.pencil(), {.compute_vectors = false});
    const auto bounds = partition::estimate_spectral_radius(fz);
    const std::pair<double, double> range{0.0, bounds.hi};
    const int n = static_cast<int>(a.size());
    const auto moments = counting::kpm_moments(fz, range, 1024, n, 0);
    std::vector<double> medians;
    for (int degree : {64, 256, 1024}) {
        std::vector<double> err;
        for (int i = 0; i < 20; ++i) {
            const double shift = eig.values.front() + (i + 0.5) / 20.0 * (eig.values.back() - eig.values.front());
            const auto filter = counting::chebyshev_step_coeffs(shift, range, degree, counting::Damping::Jackson);
            const double est = counting::kpm_count_from_moments(
                std::span<const double>(moments.data(), static_cast<std::size_t>(degree) + 1), filter);
            const auto exact = eig.values.end() - std::lower_bound(eig.values.begin(), eig.values.end(), shift);
            err.push_back(std::abs(est - static_cast<double>(exact)));
        }
        std::nth_element(err.begin(), err.begin() + 10, err.end());
        const double hi_mid = err[10];
        const double lo_mid = *std::max_element(err.begin(), err.begin() + 10);
        medians.push_back(0.5 * (lo_mid + hi_mid));
    }
    const auto plain = counting::chebyshev_step_coeffs(0.5 * (range.first + range.second), range, 256,
                                                       counting::Damping::None);
    double lowest = INFINITY;
    for (int i = 0; i < 1000; ++i)
        lowest = std::min(lowest, plain.evaluate(range.first + (range.second - range.first) * i / 999.0));
    const bool ok = medians[1] <= medians[0] && medians[2] <= medians[1] && lowest < 0.0;
    return {ok, fmt("median %.3f", medians[0]) + fmt(" -> %.3f", medians[1]) + fmt(" -> %.3f", medians[2]) +
                    fmt(", undamped min %.3e", lowest)};
}

// 10: a stored basis serves new forcings without factorizing anything.
Outcome basis_reuse() {
    const auto a = square(3, 8);
    const auto dir = std::filesystem::temp_directory_path() / "fracspec_acceptance_basis";
    std::filesystem::remove_all(dir);
    slicer::save_basis(solve_full(a, 2).basis, dir.string());
    const auto basis = slicer::load_basis(dir.string(), a.pencil_ptr(), fracpde::metadata_for(a));

    const auto before = linalg::factorization_count();
    const double alpha = 1.0;
    double worst = 0.0;
    for (int j = 1; j <= 10; ++j) {
        const int kx = 1 + (j - 1) % 5, ky = 1 + (j - 1) / 5;
        const fem::ScalarField f = [=](double x, double y) { return std::sin(kx * pi * x) * std::sin(ky * pi * y); };
        const double lam = pi * pi * (kx * kx + ky * ky);
        const fem::ScalarField exact = [=](double x, double y) { return std::pow(lam, -alpha / 2) * f(x, y); };
        const auto u = fracpde::solve_poisson_load(fem::load_vector(f, a), basis, alpha);
        worst = std::max(worst, fracpde::error_norm(u, exact, a));
    }
    const auto extra = linalg::factorization_count() - before;
    std::filesystem::remove_all(dir);
    return {extra == 0 && worst < 1e-3, std::to_string(extra) + " factorizations for 10 forcings" +
                                            fmt(", max L2 %.1e", worst)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "oracle spectrum equivalence", oracle_equivalence},
        {2, "fractional Poisson exactness", poisson_exactness},
        {3, "fractional diffusion exactness", diffusion_exactness},
        {4, "order convergence", order_convergence},
        {5, "inertia counting exactness", counting_exactness},
        {6, "partition balance", partition_balance},
        {7, "round accounting", round_accounting},
        {8, "post-processing orthonormality", orthonormality},
        {9, "KPM behaviour", kpm_behaviour},
        {10, "basis reuse", basis_reuse},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i)
        wanted.insert(std::stoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %2d %-32s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
