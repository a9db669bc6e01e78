#pragma once

#include "fracspec/fem.hpp"
#include "fracspec/slicer.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace fracspec::fracpde {

using linalg::Vector;
using slicer::EigenBasis;

struct FractionalParams {
    double alpha = 1.0;
    double mu = 1.0;
    double t = 0.0;

    void validate() const;
};

/// Coefficients with respect to the eigenvectors of a basis.
struct SpectralCoefficients {
    Vector values;
    std::string basis_hash;
};

/// c_k = phi_k^T M f for a coefficient vector f.
SpectralCoefficients expand(std::span<const double> f, const EigenBasis& basis);
/// c_k = phi_k^T b for a load vector b = M f; needs no mass solve.
SpectralCoefficients expand_load(std::span<const double> load, const EigenBasis& basis);

/// sum_k c_k phi_k, optionally over the `keep_lowest` lowest modes only.
Vector reconstruct(const SpectralCoefficients& coeffs, const EigenBasis& basis,
                   std::optional<std::size_t> keep_lowest = std::nullopt);

/// Scales c_k by theta_k^(alpha/2), alpha in [-2, 2]. Zero modes of a Neumann
/// basis map to zero for alpha > 0; for alpha < 0 they must carry no weight.
SpectralCoefficients apply_fractional(const SpectralCoefficients& coeffs, const EigenBasis& basis,
                                      double alpha);

/// Solution of (-Laplace)^(alpha/2) u = f for the coefficient vector of f.
Vector solve_poisson(std::span<const double> f, const EigenBasis& basis, double alpha);
/// Same, taking the load vector b_i = (f, e_i).
Vector solve_poisson_load(std::span<const double> load, const EigenBasis& basis, double alpha);

/// u(t) = sum_k exp(-mu theta_k^(alpha/2) t) (u0, phi_k) phi_k.
Vector solve_diffusion(std::span<const double> u0, const EigenBasis& basis, double alpha, double mu,
                       double t);

/// Quadrature L2 norm of u_h - exact.
double error_norm(std::span<const double> u, const fem::ScalarField& exact,
                  const fem::AssembledPencil& pencil);

/// Eigenvalues below 1e-12 * max |theta| are treated as zero modes.
std::size_t zero_mode_count(const EigenBasis& basis);

/// Metadata that ties a basis to an assembled pencil.
slicer::BasisMetadata metadata_for(const fem::AssembledPencil& pencil);

} // namespace fracspec::fracpde
