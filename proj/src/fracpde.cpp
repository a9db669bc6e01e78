#include "fracspec/fracpde.hpp"

#include "fracspec/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace fracspec::fracpde {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

void FractionalParams::validate() const {
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw InvalidArgument("alpha must lie in [0, 2]");
    if (!(mu > 0.0))
        throw InvalidArgument("mu must be positive");
    if (!(t >= 0.0))
        throw InvalidArgument("time must be nonnegative");
}

namespace {

Eigen::Map<const Mat> eigenvectors(const EigenBasis& basis) {
    return {basis.vectors().data(), static_cast<Eigen::Index>(basis.n()),
            static_cast<Eigen::Index>(basis.count())};
}

void check_size(std::span<const double> v, const EigenBasis& basis) {
    if (v.size() != basis.n())
        throw DimensionMismatch(basis.n(), v.size());
}

void check_aligned(const SpectralCoefficients& c, const EigenBasis& basis) {
    if (c.values.size() != basis.count())
        throw DimensionMismatch(basis.count(), c.values.size());
    if (c.basis_hash != basis.metadata().mesh_hash)
        throw BasisMismatch("spectral coefficients belong to a different basis");
}

bool is_dirichlet(const EigenBasis& basis) { return basis.metadata().bc == "dirichlet"; }

double zero_floor(const EigenBasis& basis) {
    double rho = 0.0;
    for (double v : basis.values())
        rho = std::max(rho, std::abs(v));
    return 1e-12 * rho;
}

} // namespace

std::size_t zero_mode_count(const EigenBasis& basis) {
    const double floor = zero_floor(basis);
    return static_cast<std::size_t>(std::count_if(basis.values().begin(), basis.values().end(),
                                                  [&](double v) { return std::abs(v) < floor; }));
}

SpectralCoefficients expand_load(std::span<const double> load, const EigenBasis& basis) {
    check_size(load, basis);
    SpectralCoefficients out;
    out.basis_hash = basis.metadata().mesh_hash;
    out.values.resize(basis.count());
    Eigen::Map<Vec>(out.values.data(), static_cast<Eigen::Index>(basis.count())).noalias() =
        eigenvectors(basis).transpose() * Eigen::Map<const Vec>(load.data(), static_cast<Eigen::Index>(load.size()));
    return out;
}

SpectralCoefficients expand(std::span<const double> f, const EigenBasis& basis) {
    check_size(f, basis);
    Vector mf(f.size());
    basis.pencil().mass().multiply(f, mf);
    return expand_load(mf, basis);
}

Vector reconstruct(const SpectralCoefficients& coeffs, const EigenBasis& basis,
                   std::optional<std::size_t> keep_lowest) {
    check_aligned(coeffs, basis);
    const auto used = static_cast<Eigen::Index>(std::min(keep_lowest.value_or(basis.count()), basis.count()));
    Vector out(basis.n());
    Eigen::Map<Vec>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
        eigenvectors(basis).leftCols(used) * Eigen::Map<const Vec>(coeffs.values.data(), used);
    return out;
}

SpectralCoefficients apply_fractional(const SpectralCoefficients& coeffs, const EigenBasis& basis,
                                      double alpha) {
    check_aligned(coeffs, basis);
    if (!(alpha >= -2.0 && alpha <= 2.0))
        throw InvalidArgument("alpha must lie in [-2, 2]");
    const double floor = zero_floor(basis);
    const bool dirichlet = is_dirichlet(basis);
    double norm = 0.0;
    for (double c : coeffs.values)
        norm += c * c;
    norm = std::sqrt(norm);

    SpectralCoefficients out = coeffs;
    for (std::size_t k = 0; k < basis.count(); ++k) {
        const double theta = basis.value(k);
        if (dirichlet && !(theta > 0.0))
            throw NonpositiveEigenvalue(theta);
        if (theta < -floor)
            throw NonpositiveEigenvalue(theta);
        if (alpha == 0.0)
            continue;
        if (!dirichlet && theta < floor) {
            if (alpha < 0.0 && std::abs(coeffs.values[k]) > 1e-8 * norm)
                throw NeumannNonzeroMean();
            out.values[k] = 0.0;
            continue;
        }
        out.values[k] *= std::pow(theta, 0.5 * alpha);
    }
    return out;
}

Vector solve_poisson(std::span<const double> f, const EigenBasis& basis, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw InvalidArgument("alpha must lie in [0, 2]");
    return reconstruct(apply_fractional(expand(f, basis), basis, -alpha), basis);
}

Vector solve_poisson_load(std::span<const double> load, const EigenBasis& basis, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw InvalidArgument("alpha must lie in [0, 2]");
    return reconstruct(apply_fractional(expand_load(load, basis), basis, -alpha), basis);
}

Vector solve_diffusion(std::span<const double> u0, const EigenBasis& basis, double alpha, double mu,
                       double t) {
    FractionalParams{alpha, mu, t}.validate();
    auto c = expand(u0, basis);
    const double floor = zero_floor(basis);
    for (std::size_t k = 0; k < basis.count(); ++k) {
        const double theta = basis.value(k);
        if (is_dirichlet(basis) && !(theta > 0.0))
            throw NonpositiveEigenvalue(theta);
        const double rate = alpha == 0.0 ? 1.0 : (std::abs(theta) < floor ? 0.0 : std::pow(theta, 0.5 * alpha));
        c.values[k] *= std::exp(-mu * rate * t);
    }
    return reconstruct(c, basis);
}

double error_norm(std::span<const double> u, const fem::ScalarField& exact,
                  const fem::AssembledPencil& pencil) {
    return fem::l2_error(u, exact, pencil);
}

slicer::BasisMetadata metadata_for(const fem::AssembledPencil& pencil) {
    slicer::BasisMetadata m;
    m.mesh_hash = pencil.hash();
    m.order = pencil.basis().order;
    m.elements = pencil.mesh().element_count();
    m.bc = fem::to_string(pencil.boundary_condition());
    return m;
}

} // namespace fracspec::fracpde
