#include "fracspec/counting.hpp"
#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"
#include "fracspec/fracpde.hpp"
#include "fracspec/partition.hpp"
#include "fracspec/slicer.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace fracspec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(std::vector<double> v) {
    auto* owned = new std::vector<double>(std::move(v));
    py::capsule free_when_done(owned, [](void* p) { delete static_cast<std::vector<double>*>(p); });
    return py::array_t<double>({owned->size()}, {sizeof(double)}, owned->data(), free_when_done);
}

py::array_t<double> to_numpy(std::vector<double> v, std::size_t rows, std::size_t cols, bool column_major) {
    auto* owned = new std::vector<double>(std::move(v));
    py::capsule free_when_done(owned, [](void* p) { delete static_cast<std::vector<double>*>(p); });
    const auto s = static_cast<py::ssize_t>(sizeof(double));
    std::vector<py::ssize_t> strides = column_major
        ? std::vector<py::ssize_t>{s, s * static_cast<py::ssize_t>(rows)}
        : std::vector<py::ssize_t>{s * static_cast<py::ssize_t>(cols), s};
    return py::array_t<double>({rows, cols}, strides, owned->data(), free_when_done);
}

std::span<const double> view(const Array& a, std::size_t expected, const char* what) {
    if (a.ndim() != 1 || static_cast<std::size_t>(a.size()) != expected)
        throw InvalidArgument(std::string(what) + " must be a 1-D array of length " + std::to_string(expected));
    return {a.data(), expected};
}

struct Problem {
    fem::AssembledPencil pencil;
};

// Basis together with the assembled problem it belongs to.
struct Basis {
    std::shared_ptr<const Problem> problem;
    slicer::EigenBasis basis;
    slicer::SolveReport report;
};

Problem make_problem(int dim, std::size_t elements, int order, const std::string& bc, const std::string& mesh_file) {
    auto mesh = mesh_file.empty() ? fem::build_mesh(dim, elements) : fem::load_mesh(mesh_file);
    return {fem::assemble(std::make_shared<const fem::Mesh>(std::move(mesh)), {order},
                          fem::parse_boundary_condition(bc))};
}

Basis eigensolve(std::shared_ptr<const Problem> problem, std::size_t evaluators, double tol, std::uint64_t seed,
                 int na, int nb, int nc, double threshold) {
    Basis out{problem, {}, {}};
    {
        py::gil_scoped_release release;
        const auto& fz = problem->pencil.factorizer();
        const auto bounds = partition::estimate_spectral_radius(fz, 1e-3, 200, seed ^ 0x5eedULL);
        partition::InertiaCounter counter(fz, bounds.hi, evaluators);
        const auto plan = partition::partition(bounds, evaluators, {na, nb, nc, threshold}, counter);
        slicer::EvaluatorPool pool(evaluators);
        slicer::SolverOptions options;
        options.tolerance = tol;
        options.seed = seed;
        out.basis = slicer::solve_all(fz, plan, pool, options, &out.report);
        auto meta = fracpde::metadata_for(problem->pencil);
        meta.tolerance = tol;
        meta.cluster_tol = options.cluster_tol;
        out.basis.set_metadata(meta);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spectral fractional Laplacian solver built on spectrum slicing";

    static py::exception<Error> error(m, "FracspecError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const InvalidArgument& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    py::class_<Problem, std::shared_ptr<Problem>>(m, "Problem", "Assembled stiffness/mass pencil on a mesh")
        .def(py::init([](int dim, std::size_t elements, int order, const std::string& bc, const std::string& mesh_file) {
                 return std::make_shared<Problem>(make_problem(dim, elements, order, bc, mesh_file));
             }),
             py::arg("dim") = 2, py::arg("elements") = 8, py::arg("order") = 2, py::arg("bc") = "dirichlet",
             py::arg("mesh_file") = "")
        .def_property_readonly("size", [](const Problem& p) { return p.pencil.size(); })
        .def_property_readonly("hash", [](const Problem& p) { return p.pencil.hash(); })
        .def_property_readonly("order", [](const Problem& p) { return p.pencil.basis().order; })
        .def_property_readonly("bc", [](const Problem& p) { return fem::to_string(p.pencil.boundary_condition()); })
        .def("stiffness", [](const Problem& p) {
            const auto n = p.pencil.size();
            return to_numpy(p.pencil.pencil().stiffness().to_dense(), n, n, false);
        }, "Dense stiffness matrix")
        .def("mass", [](const Problem& p) {
            const auto n = p.pencil.size();
            return to_numpy(p.pencil.pencil().mass().to_dense(), n, n, false);
        }, "Dense mass matrix")
        .def("project", [](const Problem& p, const fem::ScalarField& f) { return to_numpy(fem::project(f, p.pencil)); },
             py::arg("f"), "L2 projection of f(x, y) onto the discrete space")
        .def("load_vector", [](const Problem& p, const fem::ScalarField& f) {
            return to_numpy(fem::load_vector(f, p.pencil));
        }, py::arg("f"))
        .def("evaluate", [](const Problem& p, const Array& u, const Array& points) {
            if (points.ndim() != 2 || points.shape(1) != 2)
                throw InvalidArgument("points must have shape (k, 2)");
            std::vector<fem::Point> pts;
            for (py::ssize_t i = 0; i < points.shape(0); ++i)
                pts.push_back({points.at(i, 0), points.at(i, 1)});
            return to_numpy(fem::evaluate(view(u, p.pencil.size(), "u"), p.pencil, pts));
        }, py::arg("u"), py::arg("points"))
        .def("l2_error", [](const Problem& p, const Array& u, const fem::ScalarField& exact) {
            return fracpde::error_norm(view(u, p.pencil.size(), "u"), exact, p.pencil);
        }, py::arg("u"), py::arg("exact"));

    py::class_<Basis>(m, "Basis", "Full M-orthonormal eigenbasis")
        .def_property_readonly("values", [](const Basis& b) { return to_numpy(b.basis.values()); })
        .def_property_readonly("vectors", [](const Basis& b) {
            return to_numpy(b.basis.vectors(), b.basis.n(), b.basis.count(), true);
        }, "Eigenvectors as columns of an (n, count) array")
        .def_property_readonly("problem", [](const Basis& b) { return b.problem; })
        .def_property_readonly("factorizations", [](const Basis& b) { return b.report.factorizations; })
        .def("__len__", [](const Basis& b) { return b.basis.count(); })
        .def("max_residual", [](const Basis& b) { return slicer::max_scaled_residual(b.basis); })
        .def("orthonormality_error", [](const Basis& b) { return slicer::orthonormality_error(b.basis); })
        .def("save", [](const Basis& b, const std::string& dir) { slicer::save_basis(b.basis, dir); },
             py::arg("directory"));

    m.def("eigensolve", &eigensolve, py::arg("problem"), py::arg("evaluators") = 1, py::arg("tol") = 1e-8,
          py::arg("seed") = 0, py::arg("na") = 7, py::arg("nb") = 3, py::arg("nc") = 10, py::arg("threshold") = 0.2,
          "Partition the spectrum, solve every slice and return the full basis");
    m.def("load_basis", [](std::shared_ptr<const Problem> problem, const std::string& dir) {
        return Basis{problem, slicer::load_basis(dir, problem->pencil.pencil_ptr(), fracpde::metadata_for(problem->pencil)), {}};
    }, py::arg("problem"), py::arg("directory"));

    m.def("count_geq", [](const Problem& p, double a) { return counting::count_geq_exact(p.pencil.pencil(), a); },
          py::arg("problem"), py::arg("a"), "Exact number of eigenvalues >= a");
    m.def("count_geq_kpm", [](const Problem& p, double a, int degree, int probes, std::uint64_t seed, bool jackson) {
        counting::KpmOptions o;
        o.degree = degree;
        o.probes = probes;
        o.seed = seed;
        o.damping = jackson ? counting::Damping::Jackson : counting::Damping::None;
        return counting::count_geq_kpm(p.pencil.factorizer(), a, o);
    }, py::arg("problem"), py::arg("a"), py::arg("degree") = 512, py::arg("probes") = 32, py::arg("seed") = 0,
          py::arg("jackson") = true);

    m.def("expand", [](const Basis& b, const Array& f) {
        return to_numpy(fracpde::expand(view(f, b.basis.n(), "f"), b.basis).values);
    }, py::arg("basis"), py::arg("f"));
    m.def("apply_fractional", [](const Basis& b, const Array& f, double alpha) {
        const auto c = fracpde::apply_fractional(fracpde::expand(view(f, b.basis.n(), "f"), b.basis), b.basis, alpha);
        return to_numpy(fracpde::reconstruct(c, b.basis));
    }, py::arg("basis"), py::arg("f"), py::arg("alpha"));
    m.def("solve_poisson", [](const Basis& b, const Array& f, double alpha) {
        return to_numpy(fracpde::solve_poisson(view(f, b.basis.n(), "f"), b.basis, alpha));
    }, py::arg("basis"), py::arg("f"), py::arg("alpha"));
    m.def("solve_diffusion", [](const Basis& b, const Array& u0, double alpha, double t, double mu) {
        return to_numpy(fracpde::solve_diffusion(view(u0, b.basis.n(), "u0"), b.basis, alpha, mu, t));
    }, py::arg("basis"), py::arg("u0"), py::arg("alpha"), py::arg("t"), py::arg("mu") = 1.0);
}
