#include "fracspec/errors.hpp"
#include "fracspec/linalg.hpp"

#include <Eigen/Dense>

namespace fracspec::linalg {

namespace {

Eigen::MatrixXd to_eigen_dense(const SparseSymMatrix& a) {
    const auto n = static_cast<Eigen::Index>(a.n());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    const auto& ro = a.row_offsets();
    const auto& ci = a.col_indices();
    const auto& v = a.values();
    for (std::size_t i = 0; i < a.n(); ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p) {
            const auto r = static_cast<Eigen::Index>(i);
            const auto c = static_cast<Eigen::Index>(ci[p]);
            out(r, c) = v[p];
            out(c, r) = v[p];
        }
    return out;
}

} // namespace

// Reduction to standard form through the Cholesky factor of M, then a
// symmetric tridiagonal QL eigensolve.
DenseEigenResult dense_generalized_eig(const MatrixPencil& pencil,
                                       const DenseOracleOptions& options) {
    if (pencil.n() > options.max_dimension)
        throw InvalidArgument("pencil too large for the dense oracle: n = " +
                              std::to_string(pencil.n()));
    const Eigen::MatrixXd k = to_eigen_dense(pencil.stiffness());
    const Eigen::MatrixXd m = to_eigen_dense(pencil.mass());

    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw MassNotSPD();
    // C = L^{-1} K L^{-T}
    Eigen::MatrixXd c = llt.matrixL().solve(k);
    c = llt.matrixL().solve(c.transpose()).transpose();
    c = 0.5 * (c + c.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        c, options.compute_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success)
        throw Error("dense symmetric eigensolver did not converge");

    DenseEigenResult out;
    out.values.assign(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
    if (options.compute_vectors) {
        const Eigen::MatrixXd phi = llt.matrixU().solve(eig.eigenvectors());
        out.vectors.assign(phi.data(), phi.data() + phi.size());
    }
    return out;
}

} // namespace fracspec::linalg
