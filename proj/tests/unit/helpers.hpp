#pragma once

#include "fracspec/fem.hpp"
#include "fracspec/linalg.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace testing {

using fracspec::linalg::MatrixPencil;
using fracspec::linalg::SparseSymMatrix;
using fracspec::linalg::Triplet;

inline std::shared_ptr<const MatrixPencil> diag_pencil(const std::vector<double>& k) {
    return std::make_shared<const MatrixPencil>(SparseSymMatrix::diagonal(k),
                                                SparseSymMatrix::identity(k.size()));
}

inline std::vector<double> iota_values(int first, int last) {
    std::vector<double> v;
    for (int i = first; i <= last; ++i)
        v.push_back(i);
    return v;
}

inline SparseSymMatrix dense_symmetric(std::size_t n, const std::vector<double>& a) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            t.push_back({i, j, a[i * n + j]});
    return SparseSymMatrix::from_triplets(n, std::move(t));
}

/// Dense random symmetric K and diagonally dominant SPD M.
inline std::shared_ptr<const MatrixPencil> random_pencil(std::size_t n, unsigned seed,
                                                         bool spd_k = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> k(n * n), m(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            k[i * n + j] = k[j * n + i] = u(rng);
            m[i * n + j] = m[j * n + i] = 0.1 * u(rng) / static_cast<double>(n);
        }
    for (std::size_t i = 0; i < n; ++i) {
        m[i * n + i] = 1.0 + 0.5 * std::abs(u(rng));
        if (spd_k)
            k[i * n + i] += static_cast<double>(n);
    }
    return std::make_shared<const MatrixPencil>(dense_symmetric(n, k), dense_symmetric(n, m));
}

inline fracspec::fem::AssembledPencil unit_square(int order, std::size_t elements,
                                                  fracspec::fem::BoundaryCondition bc =
                                                      fracspec::fem::BoundaryCondition::Dirichlet) {
    return fracspec::fem::assemble(fracspec::fem::build_mesh(2, elements), {order}, bc);
}

inline fracspec::fem::AssembledPencil unit_interval(int order, std::size_t elements,
                                                    fracspec::fem::BoundaryCondition bc =
                                                        fracspec::fem::BoundaryCondition::Dirichlet) {
    return fracspec::fem::assemble(fracspec::fem::build_mesh(1, elements), {order}, bc);
}

} // namespace testing
