#include "fracspec/errors.hpp"
#include "fracspec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace fracspec::fem {

std::string to_string(BoundaryCondition bc) {
    return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
}

BoundaryCondition parse_boundary_condition(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "dirichlet")
        return BoundaryCondition::Dirichlet;
    if (t == "neumann")
        return BoundaryCondition::Neumann;
    throw InvalidArgument("unknown boundary condition '" + text + "'");
}

Point Mesh::vertex(std::size_t v) const {
    if (dim == 1)
        return {coordinates[v], 0.0};
    return {coordinates[2 * v], coordinates[2 * v + 1]};
}

namespace {

double quad_area(const Point& a, const Point& b, const Point& c, const Point& d) {
    // Shoelace formula; positive for counterclockwise ordering.
    return 0.5 * ((a.x * b.y - b.x * a.y) + (b.x * c.y - c.x * b.y) + (c.x * d.y - d.x * c.y) +
                  (d.x * a.y - a.x * d.y));
}

// Jacobian determinant of the bilinear map at each corner; all must be positive.
bool quad_is_valid(const Point& a, const Point& b, const Point& c, const Point& d) {
    const Point v[4] = {a, b, c, d};
    for (int i = 0; i < 4; ++i) {
        const Point& p = v[i];
        const Point& next = v[(i + 1) % 4];
        const Point& prev = v[(i + 3) % 4];
        const double cross = (next.x - p.x) * (prev.y - p.y) - (next.y - p.y) * (prev.x - p.x);
        if (!(cross > 0.0))
            return false;
    }
    return true;
}

void validate_mesh(const Mesh& mesh) {
    if (mesh.dim != 1 && mesh.dim != 2)
        throw InvalidArgument("mesh dimension must be 1 or 2");
    const std::size_t nv = mesh.vertex_count();
    const std::size_t per = mesh.vertices_per_element();
    if (mesh.elements.empty() || mesh.elements.size() % per != 0)
        throw InvalidArgument("mesh has no elements or a truncated connectivity table");
    std::vector<int> used(nv, 0);
    for (std::size_t v : mesh.elements) {
        if (v >= nv)
            throw InvalidArgument("connectivity references vertex " + std::to_string(v) +
                                  " out of range");
        used[v] = 1;
    }
    if (std::find(used.begin(), used.end(), 0) != used.end())
        throw InvalidArgument("mesh contains vertices not used by any element");

    const std::size_t ne = mesh.element_count();
    std::set<std::vector<std::size_t>> seen;
    for (std::size_t e = 0; e < ne; ++e) {
        std::vector<std::size_t> key(mesh.elements.begin() + static_cast<std::ptrdiff_t>(e * per),
                                     mesh.elements.begin() + static_cast<std::ptrdiff_t>((e + 1) * per));
        std::sort(key.begin(), key.end());
        if (std::adjacent_find(key.begin(), key.end()) != key.end())
            throw InvalidArgument("element " + std::to_string(e) + " repeats a vertex");
        if (!seen.insert(key).second)
            throw InvalidArgument("duplicate element " + std::to_string(e));
    }

    if (mesh.dim == 1) {
        std::vector<int> incidence(nv, 0);
        for (std::size_t e = 0; e < ne; ++e) {
            const std::size_t a = mesh.elements[2 * e], b = mesh.elements[2 * e + 1];
            if (!(mesh.coordinates[b] > mesh.coordinates[a]))
                throw InvalidArgument("segment " + std::to_string(e) + " is degenerate or reversed");
            if (++incidence[a] > 2 || ++incidence[b] > 2)
                throw InvalidArgument("nonconforming 1D mesh: vertex shared by more than two segments");
        }
        // Overlapping segments.
        std::vector<std::pair<double, double>> spans;
        for (std::size_t e = 0; e < ne; ++e)
            spans.emplace_back(mesh.coordinates[mesh.elements[2 * e]], mesh.coordinates[mesh.elements[2 * e + 1]]);
        std::sort(spans.begin(), spans.end());
        for (std::size_t i = 1; i < spans.size(); ++i)
            if (spans[i].first < spans[i - 1].second)
                throw InvalidArgument("nonconforming 1D mesh: overlapping segments");
        return;
    }

    std::map<std::pair<std::size_t, std::size_t>, int> edges;
    for (std::size_t e = 0; e < ne; ++e) {
        const std::size_t* v = &mesh.elements[4 * e];
        if (!quad_is_valid(mesh.vertex(v[0]), mesh.vertex(v[1]), mesh.vertex(v[2]), mesh.vertex(v[3])))
            throw InvalidArgument("quadrilateral " + std::to_string(e) +
                                  " is degenerate, nonconvex or clockwise");
        for (int k = 0; k < 4; ++k) {
            const std::size_t a = v[k], b = v[(k + 1) % 4];
            if (++edges[{std::min(a, b), std::max(a, b)}] > 2)
                throw InvalidArgument("nonconforming mesh: edge shared by more than two elements");
        }
    }
    // Hanging vertices: a vertex lying strictly inside some edge.
    const double tol = 1e-12;
    for (const auto& [edge, count] : edges) {
        const Point a = mesh.vertex(edge.first), b = mesh.vertex(edge.second);
        const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
        for (std::size_t v = 0; v < nv; ++v) {
            if (v == edge.first || v == edge.second)
                continue;
            const Point p = mesh.vertex(v);
            const double t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2;
            if (t <= tol || t >= 1.0 - tol)
                continue;
            const double cross = (p.x - a.x) * (b.y - a.y) - (p.y - a.y) * (b.x - a.x);
            if (std::abs(cross) <= tol * len2)
                throw InvalidArgument("nonconforming mesh: hanging vertex " + std::to_string(v));
        }
    }
}

} // namespace

double Mesh::measure() const {
    double total = 0.0;
    for (std::size_t e = 0; e < element_count(); ++e) {
        if (dim == 1) {
            total += coordinates[elements[2 * e + 1]] - coordinates[elements[2 * e]];
        } else {
            const std::size_t* v = &elements[4 * e];
            total += quad_area(vertex(v[0]), vertex(v[1]), vertex(v[2]), vertex(v[3]));
        }
    }
    return total;
}

Mesh build_mesh(int dim, std::size_t elements_per_side, DomainBounds bounds) {
    if (dim != 1 && dim != 2)
        throw InvalidArgument("mesh dimension must be 1 or 2");
    if (elements_per_side < 1)
        throw InvalidArgument("elements_per_side must be at least 1");
    for (int d = 0; d < dim; ++d)
        if (!(bounds.hi[static_cast<std::size_t>(d)] > bounds.lo[static_cast<std::size_t>(d)]))
            throw InvalidArgument("domain bounds must satisfy lo < hi");

    Mesh mesh;
    mesh.dim = dim;
    mesh.elements_per_side = elements_per_side;
    mesh.bounds = bounds;
    const std::size_t n = elements_per_side;
    auto coord = [&](int d, std::size_t i) {
        const auto du = static_cast<std::size_t>(d);
        // Exact end points; interior points by linear interpolation.
        if (i == n)
            return bounds.hi[du];
        return bounds.lo[du] + (bounds.hi[du] - bounds.lo[du]) * static_cast<double>(i) / static_cast<double>(n);
    };
    if (dim == 1) {
        for (std::size_t i = 0; i <= n; ++i)
            mesh.coordinates.push_back(coord(0, i));
        for (std::size_t e = 0; e < n; ++e) {
            mesh.elements.push_back(e);
            mesh.elements.push_back(e + 1);
        }
        return mesh;
    }
    for (std::size_t j = 0; j <= n; ++j)
        for (std::size_t i = 0; i <= n; ++i) {
            mesh.coordinates.push_back(coord(0, i));
            mesh.coordinates.push_back(coord(1, j));
        }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t v0 = j * (n + 1) + i;
            mesh.elements.insert(mesh.elements.end(), {v0, v0 + 1, v0 + n + 2, v0 + n + 1});
        }
    return mesh;
}

Mesh read_mesh(std::istream& in) {
    Mesh mesh;
    std::size_t nverts = 0, nelems = 0;
    if (!(in >> mesh.dim >> nverts >> nelems))
        throw InvalidArgument("mesh header must be 'dim nverts nelems'");
    if (mesh.dim != 1 && mesh.dim != 2)
        throw InvalidArgument("mesh dimension must be 1 or 2");
    mesh.coordinates.resize(nverts * static_cast<std::size_t>(mesh.dim));
    for (double& c : mesh.coordinates)
        if (!(in >> c) || !std::isfinite(c))
            throw InvalidArgument("truncated or invalid vertex coordinates");
    mesh.elements.resize(nelems * mesh.vertices_per_element());
    for (std::size_t& v : mesh.elements) {
        long long id = 0;
        if (!(in >> id) || id < 0)
            throw InvalidArgument("truncated or invalid element connectivity");
        v = static_cast<std::size_t>(id);
    }
    validate_mesh(mesh);
    // Bounding box for reporting.
    for (int d = 0; d < mesh.dim; ++d) {
        const auto du = static_cast<std::size_t>(d);
        mesh.bounds.lo[du] = mesh.bounds.hi[du] = mesh.coordinates[du];
        for (std::size_t v = 0; v < nverts; ++v) {
            const double c = mesh.coordinates[v * static_cast<std::size_t>(mesh.dim) + du];
            mesh.bounds.lo[du] = std::min(mesh.bounds.lo[du], c);
            mesh.bounds.hi[du] = std::max(mesh.bounds.hi[du], c);
        }
    }
    return mesh;
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open mesh file '" + path + "'");
    return read_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
    out.precision(17);
    out << mesh.dim << ' ' << mesh.vertex_count() << ' ' << mesh.element_count() << '\n';
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        const Point p = mesh.vertex(v);
        out << p.x;
        if (mesh.dim == 2)
            out << ' ' << p.y;
        out << '\n';
    }
    const std::size_t per = mesh.vertices_per_element();
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        for (std::size_t k = 0; k < per; ++k)
            out << (k ? " " : "") << mesh.elements[e * per + k];
        out << '\n';
    }
}

} // namespace fracspec::fem
