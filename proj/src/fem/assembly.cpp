#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>

namespace fracspec::fem {

namespace {

/// Lagrange basis on GLL nodes tabulated at Gauss-Legendre points.
struct ReferenceLine {
    std::vector<double> nodes;    // GLL, order + 1
    std::vector<double> qpoints;  // Gauss-Legendre
    std::vector<double> qweights;
    std::vector<double> value;    // [q * (p+1) + a]
    std::vector<double> deriv;

    ReferenceLine(int order, int quad_points) : nodes(gauss_lobatto_nodes(order)) {
        gauss_legendre(quad_points, qpoints, qweights);
        const std::size_t nb = nodes.size();
        value.resize(qpoints.size() * nb);
        deriv.resize(qpoints.size() * nb);
        for (std::size_t q = 0; q < qpoints.size(); ++q)
            for (std::size_t a = 0; a < nb; ++a) {
                value[q * nb + a] = lagrange(nodes, a, qpoints[q]);
                deriv[q * nb + a] = lagrange_derivative(nodes, a, qpoints[q]);
            }
    }
    std::size_t nb() const { return nodes.size(); }
    std::size_t nq() const { return qpoints.size(); }
};

struct Jacobian2D {
    double x, y;             // physical point
    double xs, xt, ys, yt;   // d(x,y)/d(xi,eta)
    double det;
};

Jacobian2D bilinear_map(const Point (&c)[4], double s, double t) {
    const double n[4] = {0.25 * (1 - s) * (1 - t), 0.25 * (1 + s) * (1 - t), 0.25 * (1 + s) * (1 + t),
                         0.25 * (1 - s) * (1 + t)};
    const double ns[4] = {-0.25 * (1 - t), 0.25 * (1 - t), 0.25 * (1 + t), -0.25 * (1 + t)};
    const double nt[4] = {-0.25 * (1 - s), -0.25 * (1 + s), 0.25 * (1 + s), 0.25 * (1 - s)};
    Jacobian2D j{};
    for (int k = 0; k < 4; ++k) {
        j.x += n[k] * c[k].x;
        j.y += n[k] * c[k].y;
        j.xs += ns[k] * c[k].x;
        j.xt += nt[k] * c[k].x;
        j.ys += ns[k] * c[k].y;
        j.yt += nt[k] * c[k].y;
    }
    j.det = j.xs * j.yt - j.xt * j.ys;
    return j;
}

void element_corners(const Mesh& mesh, std::size_t e, Point (&c)[4]) {
    for (int k = 0; k < 4; ++k)
        c[k] = mesh.vertex(mesh.elements[4 * e + static_cast<std::size_t>(k)]);
}

std::string fnv1a_digest(const Mesh& mesh, int order, BoundaryCondition bc) {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    const std::int64_t header[3] = {mesh.dim, order, bc == BoundaryCondition::Dirichlet ? 0 : 1};
    feed(header, sizeof header);
    feed(mesh.coordinates.data(), mesh.coordinates.size() * sizeof(double));
    for (std::size_t v : mesh.elements) {
        const auto id = static_cast<std::uint64_t>(v);
        feed(&id, sizeof id);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Locates the element containing p and its reference coordinates.
bool locate(const Mesh& mesh, const Point& p, std::size_t& element, double& s, double& t) {
    const double tol = 1e-10;
    if (mesh.elements_per_side) {
        const std::size_t n = *mesh.elements_per_side;
        const auto& b = mesh.bounds;
        const double hx = (b.hi[0] - b.lo[0]) / static_cast<double>(n);
        const double ux = (p.x - b.lo[0]) / hx;
        if (ux < -tol * static_cast<double>(n) || ux > static_cast<double>(n) * (1 + tol))
            return false;
        const auto i = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor(ux))));
        s = 2.0 * (ux - static_cast<double>(i)) - 1.0;
        if (mesh.dim == 1) {
            element = i;
            t = 0.0;
            return true;
        }
        const double hy = (b.hi[1] - b.lo[1]) / static_cast<double>(n);
        const double uy = (p.y - b.lo[1]) / hy;
        if (uy < -tol * static_cast<double>(n) || uy > static_cast<double>(n) * (1 + tol))
            return false;
        const auto j = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor(uy))));
        t = 2.0 * (uy - static_cast<double>(j)) - 1.0;
        element = j * n + i;
        return true;
    }
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        if (mesh.dim == 1) {
            const double a = mesh.coordinates[mesh.elements[2 * e]];
            const double b = mesh.coordinates[mesh.elements[2 * e + 1]];
            const double h = b - a;
            if (p.x >= a - tol * h && p.x <= b + tol * h) {
                element = e;
                s = std::clamp(2.0 * (p.x - a) / h - 1.0, -1.0, 1.0);
                t = 0.0;
                return true;
            }
            continue;
        }
        Point c[4];
        element_corners(mesh, e, c);
        double ss = 0.0, tt = 0.0;
        for (int it = 0; it < 30; ++it) {
            const Jacobian2D j = bilinear_map(c, ss, tt);
            const double rx = j.x - p.x, ry = j.y - p.y;
            const double ds = (j.yt * rx - j.xt * ry) / j.det;
            const double dt = (-j.ys * rx + j.xs * ry) / j.det;
            ss -= ds;
            tt -= dt;
            if (std::abs(ds) + std::abs(dt) < 1e-15)
                break;
        }
        if (std::abs(ss) <= 1 + tol && std::abs(tt) <= 1 + tol) {
            element = e;
            s = std::clamp(ss, -1.0, 1.0);
            t = std::clamp(tt, -1.0, 1.0);
            return true;
        }
    }
    return false;
}

} // namespace

DofMap build_dofmap(const Mesh& mesh, int order, BoundaryCondition bc) {
    if (order < 1 || order > 8)
        throw InvalidArgument("basis order must be in [1, 8]");
    const std::size_t p = static_cast<std::size_t>(order);
    const std::size_t nv = mesh.vertex_count();
    const std::size_t ne = mesh.element_count();
    DofMap map;
    std::vector<char> on_boundary;

    if (mesh.dim == 1) {
        map.dofs_per_element = p + 1;
        map.total = nv + ne * (p - 1);
        map.element_dofs.resize(ne * (p + 1));
        std::vector<int> incidence(nv, 0);
        for (std::size_t e = 0; e < ne; ++e) {
            const std::size_t a = mesh.elements[2 * e], b = mesh.elements[2 * e + 1];
            ++incidence[a];
            ++incidence[b];
            std::size_t* dofs = &map.element_dofs[e * (p + 1)];
            dofs[0] = a;
            dofs[p] = b;
            for (std::size_t k = 1; k < p; ++k)
                dofs[k] = nv + e * (p - 1) + (k - 1);
        }
        on_boundary.assign(map.total, 0);
        for (std::size_t v = 0; v < nv; ++v)
            on_boundary[v] = incidence[v] == 1;
    } else {
        const std::size_t per = (p + 1) * (p + 1);
        map.dofs_per_element = per;
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_id;
        std::vector<int> edge_count;
        for (std::size_t e = 0; e < ne; ++e)
            for (int k = 0; k < 4; ++k) {
                const std::size_t a = mesh.elements[4 * e + static_cast<std::size_t>(k)];
                const std::size_t b = mesh.elements[4 * e + static_cast<std::size_t>((k + 1) % 4)];
                auto [it, inserted] = edge_id.try_emplace({std::min(a, b), std::max(a, b)}, edge_count.size());
                if (inserted)
                    edge_count.push_back(0);
                ++edge_count[it->second];
            }
        const std::size_t nedges = edge_count.size();
        const std::size_t edge_base = nv;
        const std::size_t interior_base = nv + nedges * (p - 1);
        map.total = interior_base + ne * (p - 1) * (p - 1);
        map.element_dofs.resize(ne * per);
        on_boundary.assign(map.total, 0);

        auto local = [p](std::size_t a, std::size_t b) { return a + (p + 1) * b; };
        // Local edges as (start corner, end corner, node index along edge -> (a, b)).
        for (std::size_t e = 0; e < ne; ++e) {
            const std::size_t* v = &mesh.elements[4 * e];
            std::size_t* dofs = &map.element_dofs[e * per];
            dofs[local(0, 0)] = v[0];
            dofs[local(p, 0)] = v[1];
            dofs[local(p, p)] = v[2];
            dofs[local(0, p)] = v[3];
            struct LocalEdge {
                std::size_t from, to;
                bool horizontal;
                std::size_t fixed;
            };
            const LocalEdge edges[4] = {{v[0], v[1], true, 0}, {v[1], v[2], false, p},
                                        {v[3], v[2], true, p}, {v[0], v[3], false, 0}};
            for (const auto& le : edges) {
                const std::size_t id = edge_id.at({std::min(le.from, le.to), std::max(le.from, le.to)});
                const bool boundary_edge = edge_count[id] == 1;
                if (boundary_edge) {
                    on_boundary[le.from] = 1;
                    on_boundary[le.to] = 1;
                }
                for (std::size_t k = 1; k < p; ++k) {
                    const std::size_t pos = le.from < le.to ? k : p - k;
                    const std::size_t g = edge_base + id * (p - 1) + (pos - 1);
                    dofs[le.horizontal ? local(k, le.fixed) : local(le.fixed, k)] = g;
                    if (boundary_edge)
                        on_boundary[g] = 1;
                }
            }
            for (std::size_t b = 1; b < p; ++b)
                for (std::size_t a = 1; a < p; ++a)
                    dofs[local(a, b)] = interior_base + e * (p - 1) * (p - 1) + (b - 1) * (p - 1) + (a - 1);
        }
    }

    map.free_index.assign(map.total, -1);
    for (std::size_t g = 0; g < map.total; ++g) {
        if (bc == BoundaryCondition::Dirichlet && on_boundary[g]) {
            map.boundary.push_back(g);
        } else {
            map.free_index[g] = static_cast<std::ptrdiff_t>(map.free++);
        }
    }
    if (bc == BoundaryCondition::Neumann)
        for (std::size_t g = 0; g < map.total; ++g)
            if (on_boundary[g])
                map.boundary.push_back(g);
    return map;
}

struct AssembledPencil::Cache {
    std::once_flag factorizer_once;
    std::unique_ptr<linalg::ShiftedFactorizer> factorizer;
    std::once_flag mass_once;
    std::optional<linalg::LdltFactorization> mass;
};

AssembledPencil::AssembledPencil(std::shared_ptr<const Mesh> mesh, BasisSpec basis,
                                 BoundaryCondition bc, DofMap dofs,
                                 std::shared_ptr<const linalg::MatrixPencil> pencil)
    : mesh_(std::move(mesh)), basis_(basis), bc_(bc), dofs_(std::move(dofs)),
      pencil_(std::move(pencil)), cache_(std::make_shared<Cache>()) {
    hash_ = fnv1a_digest(*mesh_, basis_.order, bc_);
}

const linalg::ShiftedFactorizer& AssembledPencil::factorizer() const {
    std::call_once(cache_->factorizer_once, [&] {
        cache_->factorizer = std::make_unique<linalg::ShiftedFactorizer>(pencil_);
    });
    return *cache_->factorizer;
}

const linalg::LdltFactorization& AssembledPencil::mass_factor() const {
    const auto& f = factorizer();
    std::call_once(cache_->mass_once, [&] { cache_->mass = f.factor_mass(); });
    return *cache_->mass;
}

AssembledPencil assemble(const Mesh& mesh, BasisSpec basis, BoundaryCondition bc) {
    return assemble(std::make_shared<const Mesh>(mesh), basis, bc);
}

AssembledPencil assemble(std::shared_ptr<const Mesh> mesh_ptr, BasisSpec basis, BoundaryCondition bc) {
    const Mesh& mesh = *mesh_ptr;
    DofMap dofs = build_dofmap(mesh, basis.order, bc);
    const ReferenceLine ref(basis.order, basis.quadrature_points());
    const std::size_t nb = ref.nb(), nq = ref.nq();
    const std::size_t nloc = dofs.dofs_per_element;
    const std::size_t ne = mesh.element_count();

    std::vector<linalg::Triplet> kt, mt;
    kt.reserve(ne * nloc * (nloc + 1) / 2);
    mt.reserve(kt.capacity());
    std::vector<double> ke(nloc * nloc), me(nloc * nloc);
    std::vector<double> gx(nloc), gy(nloc), val(nloc);

    for (std::size_t e = 0; e < ne; ++e) {
        std::fill(ke.begin(), ke.end(), 0.0);
        std::fill(me.begin(), me.end(), 0.0);
        if (mesh.dim == 1) {
            const double x0 = mesh.coordinates[mesh.elements[2 * e]];
            const double x1 = mesh.coordinates[mesh.elements[2 * e + 1]];
            const double jac = 0.5 * (x1 - x0);
            for (std::size_t q = 0; q < nq; ++q) {
                const double w = ref.qweights[q] * jac;
                for (std::size_t i = 0; i < nb; ++i)
                    for (std::size_t j = i; j < nb; ++j) {
                        ke[i * nloc + j] += w * ref.deriv[q * nb + i] * ref.deriv[q * nb + j] / (jac * jac);
                        me[i * nloc + j] += w * ref.value[q * nb + i] * ref.value[q * nb + j];
                    }
            }
        } else {
            Point c[4];
            element_corners(mesh, e, c);
            for (std::size_t qy = 0; qy < nq; ++qy)
                for (std::size_t qx = 0; qx < nq; ++qx) {
                    const Jacobian2D j = bilinear_map(c, ref.qpoints[qx], ref.qpoints[qy]);
                    const double w = ref.qweights[qx] * ref.qweights[qy] * j.det;
                    for (std::size_t b = 0; b < nb; ++b)
                        for (std::size_t a = 0; a < nb; ++a) {
                            const std::size_t i = a + nb * b;
                            const double la = ref.value[qx * nb + a], lb = ref.value[qy * nb + b];
                            const double ds = ref.deriv[qx * nb + a] * lb;
                            const double dt = la * ref.deriv[qy * nb + b];
                            val[i] = la * lb;
                            gx[i] = (j.yt * ds - j.ys * dt) / j.det;
                            gy[i] = (-j.xt * ds + j.xs * dt) / j.det;
                        }
                    for (std::size_t i = 0; i < nloc; ++i) {
                        const double wgx = w * gx[i], wgy = w * gy[i], wv = w * val[i];
                        double* krow = &ke[i * nloc];
                        double* mrow = &me[i * nloc];
                        for (std::size_t k = i; k < nloc; ++k) {
                            krow[k] += wgx * gx[k] + wgy * gy[k];
                            mrow[k] += wv * val[k];
                        }
                    }
                }
        }
        const std::size_t* ldofs = &dofs.element_dofs[e * nloc];
        for (std::size_t i = 0; i < nloc; ++i) {
            const std::ptrdiff_t fi = dofs.free_index[ldofs[i]];
            if (fi < 0)
                continue;
            for (std::size_t k = i; k < nloc; ++k) {
                const std::ptrdiff_t fk = dofs.free_index[ldofs[k]];
                if (fk < 0)
                    continue;
                const auto r = static_cast<std::size_t>(fi), cidx = static_cast<std::size_t>(fk);
                kt.push_back({r, cidx, ke[i * nloc + k]});
                mt.push_back({r, cidx, me[i * nloc + k]});
            }
        }
    }
    auto k = linalg::SparseSymMatrix::from_triplets(dofs.free, std::move(kt));
    auto m = linalg::SparseSymMatrix::from_triplets(dofs.free, std::move(mt));
    auto pencil = std::make_shared<const linalg::MatrixPencil>(std::move(k), std::move(m));
    return AssembledPencil(std::move(mesh_ptr), basis, bc, std::move(dofs), std::move(pencil));
}

void for_each_quadrature_point(const AssembledPencil& pencil, int points,
                               const std::function<void(double, double, double)>& visitor) {
    const Mesh& mesh = pencil.mesh();
    std::vector<double> qp, qw;
    gauss_legendre(points, qp, qw);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        if (mesh.dim == 1) {
            const double x0 = mesh.coordinates[mesh.elements[2 * e]];
            const double x1 = mesh.coordinates[mesh.elements[2 * e + 1]];
            for (std::size_t q = 0; q < qp.size(); ++q)
                visitor(0.5 * (x0 + x1) + 0.5 * (x1 - x0) * qp[q], 0.0, 0.5 * (x1 - x0) * qw[q]);
            continue;
        }
        Point c[4];
        element_corners(mesh, e, c);
        for (std::size_t qy = 0; qy < qp.size(); ++qy)
            for (std::size_t qx = 0; qx < qp.size(); ++qx) {
                const Jacobian2D j = bilinear_map(c, qp[qx], qp[qy]);
                visitor(j.x, j.y, qw[qx] * qw[qy] * j.det);
            }
    }
}

namespace {

// Integrates per element with `points` Gauss points in each direction. The
// callback receives the physical point, weight * |J| and the local basis
// values (tensor-product order).
template <typename Fn>
void integrate_elements(const AssembledPencil& pencil, int points, Fn&& fn) {
    const Mesh& mesh = pencil.mesh();
    const ReferenceLine ref(pencil.basis().order, points);
    const std::size_t nb = ref.nb(), nq = ref.nq();
    const std::size_t nloc = pencil.dofs().dofs_per_element;
    std::vector<double> val(nloc);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const std::size_t* ldofs = &pencil.dofs().element_dofs[e * nloc];
        if (mesh.dim == 1) {
            const double x0 = mesh.coordinates[mesh.elements[2 * e]];
            const double x1 = mesh.coordinates[mesh.elements[2 * e + 1]];
            for (std::size_t q = 0; q < nq; ++q) {
                for (std::size_t a = 0; a < nb; ++a)
                    val[a] = ref.value[q * nb + a];
                fn(0.5 * (x0 + x1) + 0.5 * (x1 - x0) * ref.qpoints[q], 0.0,
                   0.5 * (x1 - x0) * ref.qweights[q], ldofs, val);
            }
            continue;
        }
        Point c[4];
        element_corners(mesh, e, c);
        for (std::size_t qy = 0; qy < nq; ++qy)
            for (std::size_t qx = 0; qx < nq; ++qx) {
                const Jacobian2D j = bilinear_map(c, ref.qpoints[qx], ref.qpoints[qy]);
                for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t a = 0; a < nb; ++a)
                        val[a + nb * b] = ref.value[qx * nb + a] * ref.value[qy * nb + b];
                fn(j.x, j.y, ref.qweights[qx] * ref.qweights[qy] * j.det, ldofs, val);
            }
    }
}

// Load vectors and error integrals see non-polynomial integrands; use a few
// more points than the matrix rule.
int field_quadrature_points(const AssembledPencil& pencil) { return pencil.basis().order + 6; }

} // namespace

Vector load_vector(const ScalarField& f, const AssembledPencil& pencil) {
    Vector b(pencil.size(), 0.0);
    const auto& free_index = pencil.dofs().free_index;
    integrate_elements(pencil, field_quadrature_points(pencil),
                       [&](double x, double y, double w, const std::size_t* ldofs, const std::vector<double>& val) {
                           const double fw = f(x, y) * w;
                           if (fw == 0.0)
                               return;
                           for (std::size_t i = 0; i < val.size(); ++i) {
                               const std::ptrdiff_t fi = free_index[ldofs[i]];
                               if (fi >= 0)
                                   b[static_cast<std::size_t>(fi)] += fw * val[i];
                           }
                       });
    return b;
}

Vector project(const ScalarField& f, const AssembledPencil& pencil) {
    Vector b = load_vector(f, pencil);
    pencil.mass_factor().solve_in_place(b);
    return b;
}

double inner_product(std::span<const double> u, std::span<const double> v, const AssembledPencil& pencil) {
    if (u.size() != pencil.size())
        throw DimensionMismatch(pencil.size(), u.size());
    if (v.size() != pencil.size())
        throw DimensionMismatch(pencil.size(), v.size());
    const Vector mv = linalg::spmv(pencil.pencil().mass(), v);
    return linalg::dot(u, mv);
}

Vector evaluate(std::span<const double> coeffs, const AssembledPencil& pencil, std::span<const Point> points) {
    if (coeffs.size() != pencil.size())
        throw DimensionMismatch(pencil.size(), coeffs.size());
    const Mesh& mesh = pencil.mesh();
    const auto nodes = gauss_lobatto_nodes(pencil.basis().order);
    const std::size_t nb = nodes.size();
    const std::size_t nloc = pencil.dofs().dofs_per_element;
    const auto& free_index = pencil.dofs().free_index;
    Vector out(points.size());
    std::vector<double> ls(nb), lt(nb);
    for (std::size_t k = 0; k < points.size(); ++k) {
        std::size_t e = 0;
        double s = 0.0, t = 0.0;
        if (!locate(mesh, points[k], e, s, t))
            throw InvalidArgument("evaluation point (" + std::to_string(points[k].x) + ", " +
                                  std::to_string(points[k].y) + ") lies outside the domain");
        for (std::size_t a = 0; a < nb; ++a) {
            ls[a] = lagrange(nodes, a, s);
            lt[a] = mesh.dim == 2 ? lagrange(nodes, a, t) : 1.0;
        }
        const std::size_t* ldofs = &pencil.dofs().element_dofs[e * nloc];
        double value = 0.0;
        for (std::size_t i = 0; i < nloc; ++i) {
            const std::ptrdiff_t fi = free_index[ldofs[i]];
            if (fi < 0)
                continue;
            const double phi = mesh.dim == 1 ? ls[i] : ls[i % nb] * lt[i / nb];
            value += coeffs[static_cast<std::size_t>(fi)] * phi;
        }
        out[k] = value;
    }
    return out;
}

double l2_error(std::span<const double> coeffs, const ScalarField& exact, const AssembledPencil& pencil) {
    if (coeffs.size() != pencil.size())
        throw DimensionMismatch(pencil.size(), coeffs.size());
    const auto& free_index = pencil.dofs().free_index;
    double sum = 0.0;
    integrate_elements(pencil, field_quadrature_points(pencil),
                       [&](double x, double y, double w, const std::size_t* ldofs, const std::vector<double>& val) {
                           double uh = 0.0;
                           for (std::size_t i = 0; i < val.size(); ++i) {
                               const std::ptrdiff_t fi = free_index[ldofs[i]];
                               if (fi >= 0)
                                   uh += coeffs[static_cast<std::size_t>(fi)] * val[i];
                           }
                           const double d = uh - exact(x, y);
                           sum += w * d * d;
                       });
    return std::sqrt(sum);
}

} // namespace fracspec::fem
