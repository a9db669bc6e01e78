#include "fracspec/errors.hpp"
#include "fracspec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace fracspec::linalg {

SparseSymMatrix::SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_offsets,
                                 std::vector<std::size_t> col_indices, std::vector<double> values)
    : n_(n), row_offsets_(std::move(row_offsets)), col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
    if (row_offsets_.size() != n_ + 1 || row_offsets_.front() != 0)
        throw InvalidArgument("row_offsets must have length n+1 and start at 0");
    if (row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size())
        throw InvalidArgument("CSR array lengths are inconsistent");
    for (std::size_t i = 0; i < n_; ++i) {
        if (row_offsets_[i + 1] < row_offsets_[i])
            throw InvalidArgument("row_offsets must be nondecreasing");
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
            const std::size_t j = col_indices_[p];
            if (j < i || j >= n_)
                throw InvalidArgument("entry outside the upper triangle");
            if (p > row_offsets_[i] && col_indices_[p - 1] >= j)
                throw InvalidArgument("column indices must be strictly increasing");
        }
    }
}

SparseSymMatrix SparseSymMatrix::from_triplets(std::size_t n, std::vector<Triplet> triplets) {
    for (auto& t : triplets) {
        if (t.row >= n || t.col >= n)
            throw InvalidArgument("triplet index out of range");
        if (t.col < t.row)
            std::swap(t.row, t.col);
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(triplets.size());
    vals.reserve(triplets.size());
    for (std::size_t k = 0; k < triplets.size();) {
        const auto [r, c, v0] = triplets[k];
        double v = 0.0;
        for (; k < triplets.size() && triplets[k].row == r && triplets[k].col == c; ++k)
            v += triplets[k].value;
        cols.push_back(c);
        vals.push_back(v);
        ++offsets[r + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return SparseSymMatrix(n, std::move(offsets), std::move(cols), std::move(vals));
}

SparseSymMatrix SparseSymMatrix::identity(std::size_t n) {
    std::vector<double> ones(n, 1.0);
    return diagonal(ones);
}

SparseSymMatrix SparseSymMatrix::diagonal(std::span<const double> diag) {
    const std::size_t n = diag.size();
    std::vector<std::size_t> offsets(n + 1);
    std::vector<std::size_t> cols(n);
    std::iota(offsets.begin(), offsets.end(), std::size_t{0});
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return SparseSymMatrix(n, std::move(offsets), std::move(cols),
                           std::vector<double>(diag.begin(), diag.end()));
}

double SparseSymMatrix::diagonal_entry(std::size_t i) const {
    const std::size_t p = row_offsets_[i];
    if (p < row_offsets_[i + 1] && col_indices_[p] == i)
        return values_[p];
    return 0.0;
}

void SparseSymMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_)
        throw DimensionMismatch(n_, x.size());
    if (y.size() != n_)
        throw DimensionMismatch(n_, y.size());
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
        const double xi = x[i];
        double acc = 0.0;
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
            const std::size_t j = col_indices_[p];
            const double v = values_[p];
            acc += v * x[j];
            if (j != i)
                y[j] += v * xi;
        }
        y[i] += acc;
    }
}

double SparseSymMatrix::norm1() const {
    std::vector<double> colsum(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
            const std::size_t j = col_indices_[p];
            colsum[j] += std::abs(values_[p]);
            if (j != i)
                colsum[i] += std::abs(values_[p]);
        }
    return colsum.empty() ? 0.0 : *std::max_element(colsum.begin(), colsum.end());
}

double SparseSymMatrix::frobenius_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
            s += (col_indices_[p] == i ? 1.0 : 2.0) * values_[p] * values_[p];
    return std::sqrt(s);
}

std::vector<double> SparseSymMatrix::to_dense() const {
    std::vector<double> dense(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
            const std::size_t j = col_indices_[p];
            dense[i * n_ + j] = values_[p];
            dense[j * n_ + i] = values_[p];
        }
    return dense;
}

std::string SparseSymMatrix::debug_dump() const {
    std::ostringstream out;
    out << n_ << ' ' << nnz() << '\n';
    char buf[64];
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
            std::snprintf(buf, sizeof buf, "%.17g", values_[p]);
            out << i << ' ' << col_indices_[p] << ' ' << buf << '\n';
        }
    return out.str();
}

Vector spmv(const SparseSymMatrix& a, std::span<const double> x) {
    Vector y(a.n());
    a.multiply(x, y);
    return y;
}

SparseSymMatrix linear_combination(double alpha, const SparseSymMatrix& a, double beta,
                                   const SparseSymMatrix& b) {
    if (a.n() != b.n())
        throw DimensionMismatch(a.n(), b.n());
    const std::size_t n = a.n();
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(std::max(a.nnz(), b.nnz()));
    vals.reserve(cols.capacity());
    const auto& ao = a.row_offsets();
    const auto& ac = a.col_indices();
    const auto& av = a.values();
    const auto& bo = b.row_offsets();
    const auto& bc = b.col_indices();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t p = ao[i], q = bo[i];
        while (p < ao[i + 1] || q < bo[i + 1]) {
            if (q == bo[i + 1] || (p < ao[i + 1] && ac[p] < bc[q])) {
                cols.push_back(ac[p]);
                vals.push_back(alpha * av[p++]);
            } else if (p == ao[i + 1] || bc[q] < ac[p]) {
                cols.push_back(bc[q]);
                vals.push_back(beta * bv[q++]);
            } else {
                cols.push_back(ac[p]);
                vals.push_back(alpha * av[p++] + beta * bv[q++]);
            }
        }
        offsets[i + 1] = cols.size();
    }
    return SparseSymMatrix(n, std::move(offsets), std::move(cols), std::move(vals));
}

MatrixPencil::MatrixPencil(SparseSymMatrix stiffness, SparseSymMatrix mass)
    : stiffness_(std::move(stiffness)), mass_(std::move(mass)) {
    if (stiffness_.n() != mass_.n())
        throw DimensionMismatch(stiffness_.n(), mass_.n());
}

SparseSymMatrix MatrixPencil::shifted(double a) const {
    return linear_combination(1.0, stiffness_, -a, mass_);
}

double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw DimensionMismatch(x.size(), y.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += x[i] * y[i];
    return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

} // namespace fracspec::linalg
