#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fracspec::linalg {

using Vector = std::vector<double>;

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Symmetric sparse matrix stored as the upper triangle (diagonal included) in
/// CSR form. Column indices are strictly increasing within each row and never
/// below the row index.
class SparseSymMatrix {
public:
    SparseSymMatrix() = default;
    SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_offsets,
                    std::vector<std::size_t> col_indices, std::vector<double> values);

    /// Entries on either side of the diagonal are folded into the upper
    /// triangle; duplicates are summed.
    static SparseSymMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets);
    static SparseSymMatrix identity(std::size_t n);
    static SparseSymMatrix diagonal(std::span<const double> diag);

    std::size_t n() const noexcept { return n_; }
    std::size_t nnz() const noexcept { return values_.size(); }
    const std::vector<std::size_t>& row_offsets() const noexcept { return row_offsets_; }
    const std::vector<std::size_t>& col_indices() const noexcept { return col_indices_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double diagonal_entry(std::size_t i) const;
    /// y = A x using both triangles.
    void multiply(std::span<const double> x, std::span<double> y) const;
    /// Maximum absolute column sum of the full symmetric matrix.
    double norm1() const;
    double frobenius_norm() const;
    /// Expanded dense row-major copy; intended for small matrices in tests.
    std::vector<double> to_dense() const;

    /// "n nnz" header followed by sorted "row col value" triples.
    std::string debug_dump() const;

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<std::size_t> col_indices_;
    std::vector<double> values_;
};

Vector spmv(const SparseSymMatrix& a, std::span<const double> x);

/// alpha*A + beta*B over the union sparsity pattern.
SparseSymMatrix linear_combination(double alpha, const SparseSymMatrix& a, double beta,
                                   const SparseSymMatrix& b);

/// The generalized eigenproblem K phi = theta M phi.
class MatrixPencil {
public:
    MatrixPencil(SparseSymMatrix stiffness, SparseSymMatrix mass);

    std::size_t n() const noexcept { return stiffness_.n(); }
    const SparseSymMatrix& stiffness() const noexcept { return stiffness_; }
    const SparseSymMatrix& mass() const noexcept { return mass_; }

    /// K - a M.
    SparseSymMatrix shifted(double a) const;

private:
    SparseSymMatrix stiffness_;
    SparseSymMatrix mass_;
};

enum class Ordering { Natural, ReverseCuthillMcKee, MinimumDegree };

struct Inertia {
    std::size_t negative = 0;
    std::size_t zero = 0;
    std::size_t positive = 0;
};

/// Fill-reducing permutation plus elimination tree of a fixed sparsity
/// pattern. Built once and shared by every factorization at any shift.
class LdltSymbolic {
public:
    LdltSymbolic(const SparseSymMatrix& pattern, Ordering ordering);

    std::size_t n() const noexcept { return n_; }
    std::size_t factor_nnz() const noexcept { return l_offsets_.back(); }
    /// perm[k] is the original index eliminated k-th.
    const std::vector<std::size_t>& permutation() const noexcept { return perm_; }
    const std::vector<std::size_t>& inverse_permutation() const noexcept { return iperm_; }
    const std::vector<std::ptrdiff_t>& parent() const noexcept { return parent_; }
    const std::vector<std::size_t>& factor_column_offsets() const noexcept { return l_offsets_; }

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> perm_;
    std::vector<std::size_t> iperm_;
    std::vector<std::ptrdiff_t> parent_;
    std::vector<std::size_t> l_offsets_;
};

struct FactorOptions {
    Ordering ordering = Ordering::MinimumDegree;
    /// Pivots with |d| < zero_tolerance * scale are zero; scale is the largest
    /// magnitude seen so far among the matrix diagonal and computed pivots.
    double zero_tolerance = 1e-12;
    /// When false a zero pivot raises ZeroPivot. When true it is recorded in
    /// the inertia and replaced by a signed tolerance so elimination can go on.
    bool record_zero_pivots = false;
};

/// Unit lower triangular L (column storage, permuted ordering) and diagonal D
/// with P (K - aM) P^T = L D L^T.
class LdltFactorization {
public:
    std::size_t n() const noexcept { return d_.size(); }
    double shift() const noexcept { return shift_; }
    const Inertia& inertia() const noexcept { return inertia_; }
    const Vector& d() const noexcept { return d_; }
    const std::vector<std::size_t>& l_offsets() const noexcept { return l_offsets_; }
    const std::vector<std::size_t>& l_rows() const noexcept { return l_rows_; }
    const Vector& l_values() const noexcept { return l_values_; }
    const std::vector<std::size_t>& permutation() const noexcept { return symbolic_->permutation(); }

    /// Solves (K - aM) x = b.
    void solve_in_place(std::span<double> b) const;
    Vector solve(std::span<const double> b) const;

private:
    friend LdltFactorization factor_matrix(const SparseSymMatrix&, double,
                                           std::shared_ptr<const LdltSymbolic>,
                                           const FactorOptions&);
    double shift_ = 0.0;
    Inertia inertia_;
    Vector d_;
    std::vector<std::size_t> l_offsets_;
    std::vector<std::size_t> l_rows_;
    Vector l_values_;
    std::shared_ptr<const LdltSymbolic> symbolic_;
};

/// Factors a symmetric matrix. `shift` is only recorded on the result.
LdltFactorization factor_matrix(const SparseSymMatrix& a, double shift,
                                std::shared_ptr<const LdltSymbolic> symbolic,
                                const FactorOptions& options = {});

/// Factors K - a M for a fixed pencil, reusing one symbolic analysis of the
/// union pattern of K and M. Immutable and safe to share between threads.
class ShiftedFactorizer {
public:
    explicit ShiftedFactorizer(std::shared_ptr<const MatrixPencil> pencil,
                               FactorOptions options = {});

    const MatrixPencil& pencil() const noexcept { return *pencil_; }
    std::shared_ptr<const MatrixPencil> pencil_ptr() const noexcept { return pencil_; }
    const LdltSymbolic& symbolic() const noexcept { return *symbolic_; }
    const FactorOptions& options() const noexcept { return options_; }

    LdltFactorization factor(double shift) const;
    /// Factorization of M alone, used for mass solves.
    LdltFactorization factor_mass() const;

private:
    std::shared_ptr<const MatrixPencil> pencil_;
    FactorOptions options_;
    SparseSymMatrix pattern_;
    // Positions of K and M entries inside the union pattern.
    std::vector<std::size_t> stiffness_slots_;
    std::vector<std::size_t> mass_slots_;
    std::shared_ptr<const LdltSymbolic> symbolic_;
};

LdltFactorization ldlt_factor(const MatrixPencil& pencil, double shift,
                              const FactorOptions& options = {});

/// Raises SingularFactor if the factorization recorded zero pivots.
Vector solve_factored(const LdltFactorization& factor, std::span<const double> b);

/// Process-wide number of numeric factorizations performed so far.
std::uint64_t factorization_count() noexcept;

/// Full generalized spectrum of a small pencil through dense linear algebra.
struct DenseEigenResult {
    Vector values;   ///< ascending
    Vector vectors;  ///< column-major n x n, M-orthonormal columns
};

struct DenseOracleOptions {
    std::size_t max_dimension = 4000;
    bool compute_vectors = true;
};

DenseEigenResult dense_generalized_eig(const MatrixPencil& pencil,
                                       const DenseOracleOptions& options = {});

/// Reverse Cuthill-McKee ordering of a symmetric pattern; perm[k] = old index.
std::vector<std::size_t> reverse_cuthill_mckee(const SparseSymMatrix& pattern);

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);

} // namespace fracspec::linalg
