#include "cli.hpp"

#include "fracspec/counting.hpp"
#include "fracspec/errors.hpp"
#include "fracspec/fracpde.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>

namespace fracspec::cli {

namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

double now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// RAII wrapper around std::FILE for CSV output.
class Csv {
public:
    Csv(const fs::path& path, const char* header) : f_(std::fopen(path.c_str(), "w")) {
        if (!f_)
            throw InvalidArgument("cannot write '" + path.string() + "'");
        std::fprintf(f_, "%s\n", header);
    }
    ~Csv() { std::fclose(f_); }
    Csv(const Csv&) = delete;
    Csv& operator=(const Csv&) = delete;
    std::FILE* get() const { return f_; }

private:
    std::FILE* f_;
};

std::string alpha_tag(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", alpha);
    return buf;
}

fs::path out_dir(const RunConfig& c) {
    fs::create_directories(c.out);
    return c.out;
}

// First Laplace eigenfunction of the bounding box and its eigenvalue. Under
// Neumann conditions the cosine mode is used so the forcing has zero mean.
struct Mode {
    fem::ScalarField shape;
    double lambda;
};

Mode first_mode(const fem::AssembledPencil& a) {
    const auto& b = a.mesh().bounds;
    const int dim = a.mesh().dim;
    const double lx = b.hi[0] - b.lo[0], ly = b.hi[1] - b.lo[1];
    const double x0 = b.lo[0], y0 = b.lo[1];
    const bool neumann = a.boundary_condition() == fem::BoundaryCondition::Neumann;
    double lambda = pi * pi / (lx * lx);
    if (dim == 2)
        lambda += pi * pi / (ly * ly);
    fem::ScalarField shape = [=](double x, double y) {
        const double sx = neumann ? std::cos(pi * (x - x0) / lx) : std::sin(pi * (x - x0) / lx);
        if (dim == 1)
            return 2.0 * sx;
        const double sy = neumann ? std::cos(pi * (y - y0) / ly) : std::sin(pi * (y - y0) / ly);
        return 2.0 * sx * sy;
    };
    return {shape, lambda};
}

fem::ScalarField scaled(const fem::ScalarField& f, double s) {
    return [=](double x, double y) { return s * f(x, y); };
}

std::vector<fem::Point> sample_points(const fem::AssembledPencil& a, std::size_t samples) {
    const auto& b = a.mesh().bounds;
    std::vector<fem::Point> pts;
    const std::size_t ny = a.mesh().dim == 2 ? samples : 1;
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < samples; ++i) {
            const double tx = samples > 1 ? static_cast<double>(i) / static_cast<double>(samples - 1) : 0.5;
            const double ty = ny > 1 ? static_cast<double>(j) / static_cast<double>(ny - 1) : 0.0;
            pts.push_back({b.lo[0] + tx * (b.hi[0] - b.lo[0]), a.mesh().dim == 2 ? b.lo[1] + ty * (b.hi[1] - b.lo[1]) : 0.0});
        }
    return pts;
}

std::vector<fem::Point> quadrature_points(const fem::AssembledPencil& a) {
    std::vector<fem::Point> pts;
    fem::for_each_quadrature_point(a, a.basis().order + 2, [&](double x, double y, double) { pts.push_back({x, y}); });
    return pts;
}

void write_field(const fs::path& path, const fem::AssembledPencil& a, const std::vector<double>& coeffs,
                 const RunConfig& c) {
    const auto pts = c.sampling == "grid" ? sample_points(a, c.samples) : quadrature_points(a);
    const auto values = fem::evaluate(coeffs, a, pts);
    Csv csv(path, "x,y,value");
    for (std::size_t i = 0; i < pts.size(); ++i)
        std::fprintf(csv.get(), "%.17g,%.17g,%.17g\n", pts[i].x, pts[i].y, values[i]);
}

std::vector<double> alphas_or(const RunConfig& c, std::vector<double> fallback) {
    return c.alpha.empty() ? fallback : c.alpha;
}

std::vector<double> alpha_grid() {
    std::vector<double> a;
    for (int i = 0; i <= 10; ++i)
        a.push_back(0.2 * i);
    return a;
}

void write_phases(const fs::path& path, const slicer::PhaseTimes& t, const partition::PartitionPlan& plan,
                  const slicer::SolveReport& report, bool cached) {
    Csv csv(path, "phase,seconds,factorizations,rounds,cached");
    const int c = cached ? 1 : 0;
    std::fprintf(csv.get(), "spectral_radius,%.6f,0,0,%d\n", t.spectral_radius, c);
    std::fprintf(csv.get(), "partition,%.6f,%zu,%zu,%d\n", t.partition, plan.stats.factorizations, plan.stats.rounds, c);
    std::fprintf(csv.get(), "solve,%.6f,%zu,1,%d\n", t.solve, report.factorizations, c);
    std::fprintf(csv.get(), "postprocess,%.6f,0,0,%d\n", t.postprocess, c);
    std::fprintf(csv.get(), "total,%.6f,%zu,%zu,%d\n", t.total(), plan.stats.factorizations + report.factorizations,
                 plan.stats.rounds + 1, c);
}

} // namespace

void RunConfig::validate() const {
    if (dim != 1 && dim != 2)
        throw InvalidArgument("dim must be 1 or 2");
    if (elements.empty() || std::any_of(elements.begin(), elements.end(), [](std::size_t e) { return e == 0; }))
        throw InvalidArgument("elements must be positive");
    auto bad_order = [](int p) { return p < 1 || p > 8; };
    if (bad_order(order) || orders.empty() || std::any_of(orders.begin(), orders.end(), bad_order))
        throw InvalidArgument("orders must lie in [1, 8]");
    (void)fem::parse_boundary_condition(bc);
    for (double a : alpha)
        if (!(a >= 0.0 && a <= 2.0))
            throw InvalidArgument("alpha must lie in [0, 2]");
    if (!(mu > 0.0))
        throw InvalidArgument("mu must be positive");
    if (!(time >= 0.0))
        throw InvalidArgument("time must be nonnegative");
    if (evaluators < 1)
        throw InvalidArgument("evaluators must be at least 1");
    refinement().validate();
    if (!(tol > 0.0 && tol < 1.0))
        throw InvalidArgument("tol must lie in (0, 1)");
    if (problem != "poisson" && problem != "diffusion")
        throw InvalidArgument("problem must be poisson or diffusion");
    if (degrees.empty() || std::any_of(degrees.begin(), degrees.end(), [](int d) { return d < 1; }))
        throw InvalidArgument("degrees must be positive");
    if (shifts < 1 || probes < 1 || samples < 1)
        throw InvalidArgument("shifts, probes and samples must be positive");
    if (sampling != "grid" && sampling != "quadrature")
        throw InvalidArgument("sampling must be grid or quadrature");
}

partition::RefinementParams RunConfig::refinement() const { return {na, nb, nc, threshold}; }

slicer::SolverOptions RunConfig::solver_options() const {
    slicer::SolverOptions o;
    o.tolerance = tol;
    o.seed = seed;
    return o;
}

fem::AssembledPencil build_pencil(const RunConfig& c, std::size_t elements, int order) {
    const auto bc = fem::parse_boundary_condition(c.bc);
    auto mesh = c.mesh_file.empty() ? fem::build_mesh(c.dim, elements) : fem::load_mesh(c.mesh_file);
    return fem::assemble(std::make_shared<const fem::Mesh>(std::move(mesh)), {order}, bc);
}

EigsResult compute_basis(const RunConfig& c, const fem::AssembledPencil& a) {
    EigsResult r;
    const auto meta = fracpde::metadata_for(a);
    fs::path cache;
    if (!c.basis_cache.empty()) {
        cache = fs::path(c.basis_cache) / a.hash();
        if (fs::exists(cache / "meta.json")) {
            try {
                r.basis = slicer::load_basis(cache.string(), a.pencil_ptr(), meta);
                if (r.basis.metadata().tolerance <= c.tol) {
                    r.from_cache = true;
                    r.plan.splits = {0.0, 0.0};
                    r.plan.counts = {r.basis.count()};
                    r.plan.total = r.basis.count();
                    return r;
                }
            } catch (const BasisMismatch& e) {
                std::cerr << "ignoring basis cache entry: " << e.what() << '\n';
            }
        }
    }

    const auto& fz = a.factorizer();
    const double t0 = now();
    const auto bounds = partition::estimate_spectral_radius(fz, 1e-3, 200, c.seed ^ 0x5eedULL);
    const double t1 = now();
    partition::InertiaCounter counter(fz, bounds.hi, c.evaluators);
    r.plan = partition::partition(bounds, c.evaluators, c.refinement(), counter);
    const double t2 = now();
    slicer::EvaluatorPool pool(c.evaluators);
    r.basis = slicer::solve_all(fz, r.plan, pool, c.solver_options(), &r.report);
    r.report.phases.spectral_radius = t1 - t0;
    r.report.phases.partition = t2 - t1;
    auto m = meta;
    m.tolerance = c.tol;
    m.cluster_tol = r.basis.metadata().cluster_tol;
    r.basis.set_metadata(m);
    if (!cache.empty())
        slicer::save_basis(r.basis, cache.string());
    return r;
}

int cmd_eigs(const RunConfig& c) {
    const auto a = build_pencil(c, c.elements.front(), c.order);
    const auto r = compute_basis(c, a);
    const auto dir = out_dir(c);
    slicer::save_basis(r.basis, (dir / "basis").string());
    write_phases(dir / "phases.csv", r.report.phases, r.plan, r.report, r.from_cache);
    if (!r.from_cache) {
        partition::save_plan((dir / "plan.txt").string(), r.plan);
        Csv csv(dir / "slices.csv", "slice,found,factorizations,operator_applications,restarts,subslices,seconds");
        for (const auto& s : r.report.slices)
            std::fprintf(csv.get(), "%zu,%zu,%zu,%zu,%zu,%zu,%.6f\n", s.index, s.found, s.factorizations,
                         s.operator_applications, s.restarts, s.subslices, s.seconds);
    }
    const double res = slicer::max_scaled_residual(r.basis);
    std::cout << "N = " << r.basis.n() << ", eigenpairs = " << r.basis.count() << ", max scaled residual = " << res
              << (r.from_cache ? " (cached basis)" : "") << '\n';
    return res <= c.tol ? 0 : 5;
}

namespace {

struct Solves {
    const RunConfig& c;
    fem::AssembledPencil a;
    EigsResult r;
    Mode mode;
    std::vector<double> f;

    explicit Solves(const RunConfig& config)
        : c(config), a(build_pencil(config, config.elements.front(), config.order)), r(compute_basis(config, a)),
          mode(first_mode(a)), f(fem::project(mode.shape, a)) {}
};

} // namespace

int cmd_poisson(const RunConfig& c) {
    Solves s(c);
    const auto dir = out_dir(c);
    Csv summary(dir / "poisson.csv", "alpha,l2_error");
    for (double alpha : alphas_or(c, {1.0})) {
        const auto u = fracpde::solve_poisson(s.f, s.r.basis, alpha);
        const double err = fracpde::error_norm(u, scaled(s.mode.shape, std::pow(s.mode.lambda, -alpha / 2)), s.a);
        std::fprintf(summary.get(), "%.17g,%.17g\n", alpha, err);
        write_field(dir / ("poisson_alpha_" + alpha_tag(alpha) + ".csv"), s.a, u, c);
    }
    return 0;
}

int cmd_diffusion(const RunConfig& c) {
    Solves s(c);
    const auto dir = out_dir(c);
    Csv summary(dir / "diffusion.csv", "alpha,mu,time,l2_error");
    for (double alpha : alphas_or(c, {1.0})) {
        const auto u = fracpde::solve_diffusion(s.f, s.r.basis, alpha, c.mu, c.time);
        const double rate = alpha == 0.0 ? 1.0 : std::pow(s.mode.lambda, alpha / 2);
        const double err = fracpde::error_norm(u, scaled(s.mode.shape, std::exp(-c.mu * rate * c.time)), s.a);
        std::fprintf(summary.get(), "%.17g,%.17g,%.17g,%.17g\n", alpha, c.mu, c.time, err);
        write_field(dir / ("diffusion_alpha_" + alpha_tag(alpha) + ".csv"), s.a, u, c);
    }
    return 0;
}

int cmd_apply(const RunConfig& c) {
    Solves s(c);
    const auto dir = out_dir(c);
    const auto coeffs = fracpde::expand(s.f, s.r.basis);
    for (double alpha : alphas_or(c, {0.0, 1.0, 2.0})) {
        const auto scaled_coeffs = fracpde::apply_fractional(coeffs, s.r.basis, alpha);
        write_field(dir / ("apply_alpha_" + alpha_tag(alpha) + ".csv"), s.a,
                    fracpde::reconstruct(scaled_coeffs, s.r.basis), c);
        Csv txt(dir / ("apply_alpha_" + alpha_tag(alpha) + "_coeffs.txt"), "# eigenvalue coefficient");
        for (std::size_t k = 0; k < scaled_coeffs.values.size(); ++k)
            std::fprintf(txt.get(), "%.17g %.17g\n", s.r.basis.value(k), scaled_coeffs.values[k]);
    }
    return 0;
}

int cmd_partition(const RunConfig& c) {
    const auto a = build_pencil(c, c.elements.front(), c.order);
    const auto& fz = a.factorizer();
    const auto bounds = partition::estimate_spectral_radius(fz, 1e-3, 200, c.seed ^ 0x5eedULL);
    partition::InertiaCounter stages(fz, bounds.hi, c.evaluators);
    const auto uniform = partition::partition_uniform(bounds, c.evaluators, stages);
    const auto global = partition::refine_global(uniform, c.na, stages);
    const auto local = partition::refine_local(global, c.nb, c.nc, c.threshold, stages);
    partition::InertiaCounter pipeline(fz, bounds.hi, c.evaluators);
    const auto plan = partition::partition(bounds, c.evaluators, c.refinement(), pipeline);

    const auto dir = out_dir(c);
    partition::save_plan((dir / "plan.txt").string(), plan);
    Csv csv(dir / "imbalance.csv", "stage,slices,max_load,min_load,ideal_load,rounds,factorizations");
    auto row = [&](const char* name, const partition::PartitionPlan& p) {
        std::fprintf(csv.get(), "%s,%zu,%zu,%zu,%.6f,%zu,%zu\n", name, p.slices(), p.max_load(), p.min_load(),
                     p.ideal_load(), p.stats.rounds, p.stats.factorizations);
    };
    row("uniform", uniform);
    row("global", global);
    row("local", local);
    row("pipeline", plan);
    std::cout << "N = " << a.size() << ", max load " << uniform.max_load() << " -> " << plan.max_load()
              << " (ideal " << plan.ideal_load() << ")\n";
    return 0;
}

int cmd_count(const RunConfig& c) {
    const auto a = build_pencil(c, c.elements.front(), c.order);
    const auto& fz = a.factorizer();
    const auto bounds = partition::estimate_spectral_radius(fz, 1e-3, 200, c.seed ^ 0x5eedULL);
    const double pad = 1e-8 * bounds.hi;
    const std::pair<double, double> range{bounds.lo - pad, bounds.hi};
    const int max_degree = *std::max_element(c.degrees.begin(), c.degrees.end());
    const auto moments = counting::kpm_moments(fz, range, max_degree, c.probes, c.seed);

    std::vector<double> shifts;
    for (int i = 0; i < c.shifts; ++i)
        shifts.push_back(range.first + (i + 0.5) / c.shifts * (range.second - range.first));
    partition::InertiaCounter counter(fz, bounds.hi, c.evaluators);
    const auto exact = counter.count_round(shifts);

    const auto dir = out_dir(c);
    Csv csv(dir / "counts.csv", "shift,exact,kpm_estimate,degree,damping");
    for (int degree : c.degrees)
        for (auto damping : {counting::Damping::Jackson, counting::Damping::None})
            for (std::size_t i = 0; i < shifts.size(); ++i) {
                const auto filter = counting::chebyshev_step_coeffs(shifts[i], range, degree, damping);
                const double est = counting::kpm_count_from_moments(
                    std::span<const double>(moments.data(), static_cast<std::size_t>(degree) + 1), filter);
                std::fprintf(csv.get(), "%.17g,%zu,%.17g,%d,%s\n", shifts[i], exact[i].count, est, degree,
                             damping == counting::Damping::Jackson ? "jackson" : "none");
            }
    return 0;
}

int cmd_accuracy_sweep(const RunConfig& c) {
    const auto dir = out_dir(c);
    Csv csv(dir / "accuracy.csv", "problem,alpha,order,elements,l2_error");
    const auto alphas = alphas_or(c, alpha_grid());
    for (std::size_t elements : c.elements)
        for (int order : c.orders) {
            const auto a = build_pencil(c, elements, order);
            const auto r = compute_basis(c, a);
            const auto mode = first_mode(a);
            const auto f = fem::project(mode.shape, a);
            for (double alpha : alphas) {
                double err = 0.0;
                if (c.problem == "poisson") {
                    const auto u = fracpde::solve_poisson(f, r.basis, alpha);
                    err = fracpde::error_norm(u, scaled(mode.shape, std::pow(mode.lambda, -alpha / 2)), a);
                } else {
                    const auto u = fracpde::solve_diffusion(f, r.basis, alpha, c.mu, c.time);
                    const double rate = alpha == 0.0 ? 1.0 : std::pow(mode.lambda, alpha / 2);
                    err = fracpde::error_norm(u, scaled(mode.shape, std::exp(-c.mu * rate * c.time)), a);
                }
                std::fprintf(csv.get(), "%s,%.17g,%d,%zu,%.17g\n", c.problem.c_str(), alpha, order, elements, err);
            }
            std::fflush(csv.get());
        }
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"Spectral fractional Laplacian solver built on spectrum slicing", "fracspec"};
    RunConfig c;
    c.alpha.clear();
    app.set_config("--config", "", "Flat key = value file; keys are the long option names");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.add_option("--dim", c.dim, "Spatial dimension (1 or 2)")->capture_default_str();
    app.add_option("--elements", c.elements, "Elements per side (list for accuracy-sweep)")->delimiter(',')->capture_default_str();
    app.add_option("--order", c.order, "Polynomial order")->capture_default_str();
    app.add_option("--orders", c.orders, "Orders swept by accuracy-sweep")->delimiter(',')->capture_default_str();
    app.add_option("--bc", c.bc, "dirichlet or neumann")->capture_default_str();
    app.add_option("--alpha", c.alpha, "Fractional order(s) in [0, 2]")->delimiter(',');
    app.add_option("--mu", c.mu, "Diffusivity")->capture_default_str();
    app.add_option("--time", c.time, "Evaluation time for diffusion")->capture_default_str();
    app.add_option("--evaluators", c.evaluators, "Number of evaluators P")->capture_default_str();
    app.add_option("--na", c.na, "Global refinement iterations")->capture_default_str();
    app.add_option("--nb", c.nb, "Local refinement passes")->capture_default_str();
    app.add_option("--nc", c.nc, "Bisection steps per search")->capture_default_str();
    app.add_option("--threshold", c.threshold, "Local imbalance threshold")->capture_default_str();
    app.add_option("--tol", c.tol, "Scaled residual tolerance")->capture_default_str();
    app.add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
    app.add_option("--out", c.out, "Output directory")->capture_default_str();
    app.add_option("--basis-cache", c.basis_cache, "Directory of cached bases keyed by pencil hash");
    app.add_option("--mesh-file", c.mesh_file, "Import a mesh instead of the unit square/interval");
    app.add_option("--problem", c.problem, "poisson or diffusion (accuracy-sweep)")->capture_default_str();
    app.add_option("--degrees", c.degrees, "KPM degrees (count)")->delimiter(',')->capture_default_str();
    app.add_option("--shifts", c.shifts, "Shift grid size (count)")->capture_default_str();
    app.add_option("--probes", c.probes, "KPM probe vectors (count)")->capture_default_str();
    app.add_option("--samples", c.samples, "Sampling grid points per side")->capture_default_str();
    app.add_option("--sampling", c.sampling, "Field export points: grid or quadrature")->capture_default_str();

    const std::vector<std::pair<const char*, const char*>> commands{
        {"eigs", "Compute and store the full eigenbasis"},
        {"poisson", "Fractional Poisson solves"},
        {"diffusion", "Fractional diffusion at a given time"},
        {"apply", "Apply the fractional operator to the forcing"},
        {"partition", "Partition the spectrum and report the imbalance"},
        {"count", "Exact versus KPM eigenvalue counts"},
        {"accuracy-sweep", "L2 errors over orders and alpha"},
    };
    for (const auto& [name, help] : commands)
        app.add_subcommand(name, help)->fallthrough();
    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    c.command = app.get_subcommands().front()->get_name();

    try {
        c.validate();
        if (c.command == "eigs")
            return cmd_eigs(c);
        if (c.command == "poisson")
            return cmd_poisson(c);
        if (c.command == "diffusion")
            return cmd_diffusion(c);
        if (c.command == "apply")
            return cmd_apply(c);
        if (c.command == "partition")
            return cmd_partition(c);
        if (c.command == "count")
            return cmd_count(c);
        return cmd_accuracy_sweep(c);
    } catch (const SliceIncomplete& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}

} // namespace fracspec::cli
