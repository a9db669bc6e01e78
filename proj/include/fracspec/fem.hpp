#pragma once

#include "fracspec/linalg.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fracspec::fem {

using linalg::Vector;

enum class BoundaryCondition { Dirichlet, Neumann };

std::string to_string(BoundaryCondition bc);
BoundaryCondition parse_boundary_condition(const std::string& text);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Axis-aligned box [lo, hi]; the y range is ignored for 1D meshes.
struct DomainBounds {
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{1.0, 1.0};
};

/// Conforming mesh of segments (1D) or quadrilaterals (2D). Quad vertices are
/// listed counterclockwise.
struct Mesh {
    int dim = 1;
    std::vector<double> coordinates;  ///< dim values per vertex
    std::vector<std::size_t> elements; ///< 2 (1D) or 4 (2D) vertex ids per element

    /// Set for meshes produced by build_mesh.
    std::optional<std::size_t> elements_per_side;
    DomainBounds bounds;

    std::size_t vertex_count() const noexcept { return coordinates.size() / static_cast<std::size_t>(dim); }
    std::size_t vertices_per_element() const noexcept { return dim == 1 ? 2 : 4; }
    std::size_t element_count() const noexcept { return elements.size() / vertices_per_element(); }
    Point vertex(std::size_t v) const;
    /// Sum of element measures.
    double measure() const;
};

/// Uniform grid with lexicographically numbered vertices.
Mesh build_mesh(int dim, std::size_t elements_per_side, DomainBounds bounds = {});

/// Text import: "dim nverts nelems", then nverts coordinate lines, then nelems
/// connectivity lines with 0-based vertex ids. Nonconforming or degenerate
/// input is rejected with InvalidArgument.
Mesh read_mesh(std::istream& in);
Mesh load_mesh(const std::string& path);
void write_mesh(std::ostream& out, const Mesh& mesh);

struct BasisSpec {
    int order = 1;
    int quadrature_points() const noexcept { return order + 2; }
};

/// Gauss-Lobatto-Legendre nodes on [-1, 1] (order + 1 points).
std::vector<double> gauss_lobatto_nodes(int order);
/// Gauss-Legendre points and weights on [-1, 1].
void gauss_legendre(int points, std::vector<double>& nodes, std::vector<double>& weights);
/// Lagrange basis polynomial `index` on `nodes`, and its derivative, at x.
double lagrange(std::span<const double> nodes, std::size_t index, double x);
double lagrange_derivative(std::span<const double> nodes, std::size_t index, double x);

struct DofMap {
    std::size_t total = 0;
    std::size_t free = 0;
    std::size_t dofs_per_element = 0;
    /// Element-to-global table, dofs_per_element entries per element, in
    /// tensor-product local order (first reference coordinate fastest).
    std::vector<std::size_t> element_dofs;
    /// Global dof -> free index, or -1 for eliminated boundary dofs.
    std::vector<std::ptrdiff_t> free_index;
    std::vector<std::size_t> boundary;
};

DofMap build_dofmap(const Mesh& mesh, int order, BoundaryCondition bc);

using ScalarField = std::function<double(double x, double y)>;

/// Stiffness/mass pencil restricted to the free dofs together with the data
/// needed to move between fields and coefficient vectors.
class AssembledPencil {
public:
    AssembledPencil(std::shared_ptr<const Mesh> mesh, BasisSpec basis, BoundaryCondition bc,
                    DofMap dofs, std::shared_ptr<const linalg::MatrixPencil> pencil);

    const Mesh& mesh() const noexcept { return *mesh_; }
    std::shared_ptr<const Mesh> mesh_ptr() const noexcept { return mesh_; }
    const BasisSpec& basis() const noexcept { return basis_; }
    BoundaryCondition boundary_condition() const noexcept { return bc_; }
    const DofMap& dofs() const noexcept { return dofs_; }
    const linalg::MatrixPencil& pencil() const noexcept { return *pencil_; }
    std::shared_ptr<const linalg::MatrixPencil> pencil_ptr() const noexcept { return pencil_; }
    std::size_t size() const noexcept { return pencil_->n(); }
    /// Hex digest of mesh geometry, order and boundary condition.
    const std::string& hash() const noexcept { return hash_; }

    /// Shared shifted factorizer (symbolic analysis computed on first use).
    const linalg::ShiftedFactorizer& factorizer() const;
    /// Factorization of M, computed once on first use.
    const linalg::LdltFactorization& mass_factor() const;

private:
    struct Cache;
    std::shared_ptr<const Mesh> mesh_;
    BasisSpec basis_;
    BoundaryCondition bc_;
    DofMap dofs_;
    std::shared_ptr<const linalg::MatrixPencil> pencil_;
    std::string hash_;
    std::shared_ptr<Cache> cache_;
};

AssembledPencil assemble(std::shared_ptr<const Mesh> mesh, BasisSpec basis, BoundaryCondition bc);
AssembledPencil assemble(const Mesh& mesh, BasisSpec basis, BoundaryCondition bc);

/// b_i = integral of f * e_i over the domain, on free dofs.
Vector load_vector(const ScalarField& f, const AssembledPencil& pencil);
/// L2 projection onto the discrete space: solves M c = b.
Vector project(const ScalarField& f, const AssembledPencil& pencil);
/// u^T M v.
double inner_product(std::span<const double> u, std::span<const double> v,
                     const AssembledPencil& pencil);
/// Field values of the expansion at the given points.
Vector evaluate(std::span<const double> coeffs, const AssembledPencil& pencil,
                std::span<const Point> points);
/// Quadrature L2 norm of (u_h - exact) over the domain.
double l2_error(std::span<const double> coeffs, const ScalarField& exact,
                const AssembledPencil& pencil);

/// Visits every element quadrature point: visitor(x, y, weight * |J|).
void for_each_quadrature_point(const AssembledPencil& pencil, int points,
                               const std::function<void(double, double, double)>& visitor);

} // namespace fracspec::fem
