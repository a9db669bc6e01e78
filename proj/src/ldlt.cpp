#include "fracspec/errors.hpp"
#include "fracspec/linalg.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace fracspec::linalg {

namespace {

std::atomic<std::uint64_t> g_factorizations{0};

std::vector<std::size_t> adjacency_degrees(const SparseSymMatrix& a,
                                           std::vector<std::vector<std::size_t>>& adj) {
    const std::size_t n = a.n();
    adj.assign(n, {});
    const auto& ro = a.row_offsets();
    const auto& ci = a.col_indices();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p)
            if (ci[p] != i) {
                adj[i].push_back(ci[p]);
                adj[ci[p]].push_back(i);
            }
    std::vector<std::size_t> degree(n);
    for (std::size_t i = 0; i < n; ++i)
        degree[i] = adj[i].size();
    return degree;
}

std::vector<std::size_t> minimum_degree_ordering(const SparseSymMatrix& a) {
    using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
    const int n = static_cast<int>(a.n());
    std::vector<Eigen::Triplet<double, int>> entries;
    entries.reserve(a.nnz());
    const auto& ro = a.row_offsets();
    const auto& ci = a.col_indices();
    for (std::size_t i = 0; i < a.n(); ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p)
            entries.emplace_back(static_cast<int>(i), static_cast<int>(ci[p]), 1.0);
    SpMat mat(n, n);
    mat.setFromTriplets(entries.begin(), entries.end());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(mat, pinv);
    std::vector<std::size_t> perm(a.n());
    for (int k = 0; k < n; ++k)
        perm[static_cast<std::size_t>(k)] = static_cast<std::size_t>(pinv.indices()(k));
    return perm;
}

} // namespace

std::uint64_t factorization_count() noexcept { return g_factorizations.load(); }

std::vector<std::size_t> reverse_cuthill_mckee(const SparseSymMatrix& pattern) {
    const std::size_t n = pattern.n();
    std::vector<std::vector<std::size_t>> adj;
    const auto degree = adjacency_degrees(pattern, adj);
    for (auto& nb : adj)
        std::sort(nb.begin(), nb.end(), [&](std::size_t x, std::size_t y) {
            return degree[x] != degree[y] ? degree[x] < degree[y] : x < y;
        });

    std::vector<char> visited(n, 0);
    std::vector<std::size_t> order;
    order.reserve(n);

    auto bfs_levels = [&](std::size_t root, std::vector<std::ptrdiff_t>& level) {
        std::fill(level.begin(), level.end(), -1);
        std::deque<std::size_t> queue{root};
        level[root] = 0;
        std::size_t last = root;
        while (!queue.empty()) {
            const std::size_t v = queue.front();
            queue.pop_front();
            last = v;
            for (std::size_t w : adj[v])
                if (level[w] < 0) {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
        }
        return last;
    };

    std::vector<std::ptrdiff_t> level(n, -1);
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (visited[seed])
            continue;
        // Pseudo-peripheral start: hop to the farthest node a few times.
        std::size_t root = seed;
        std::ptrdiff_t depth = -1;
        for (int hop = 0; hop < 4; ++hop) {
            const std::size_t far = bfs_levels(root, level);
            if (level[far] <= depth)
                break;
            depth = level[far];
            root = far;
        }
        std::deque<std::size_t> queue{root};
        visited[root] = 1;
        while (!queue.empty()) {
            const std::size_t v = queue.front();
            queue.pop_front();
            order.push_back(v);
            for (std::size_t w : adj[v])
                if (!visited[w]) {
                    visited[w] = 1;
                    queue.push_back(w);
                }
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

LdltSymbolic::LdltSymbolic(const SparseSymMatrix& pattern, Ordering ordering) : n_(pattern.n()) {
    switch (ordering) {
    case Ordering::Natural:
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        break;
    case Ordering::ReverseCuthillMcKee:
        perm_ = reverse_cuthill_mckee(pattern);
        break;
    case Ordering::MinimumDegree:
        perm_ = minimum_degree_ordering(pattern);
        break;
    }
    iperm_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k)
        iperm_[perm_[k]] = k;

    // Column-oriented upper triangle of the permuted pattern.
    const auto& ro = pattern.row_offsets();
    const auto& ci = pattern.col_indices();
    std::vector<std::size_t> col_offsets(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p)
            ++col_offsets[std::max(iperm_[i], iperm_[ci[p]]) + 1];
    std::partial_sum(col_offsets.begin(), col_offsets.end(), col_offsets.begin());
    std::vector<std::size_t> rows(pattern.nnz());
    std::vector<std::size_t> fill = col_offsets;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p) {
            const std::size_t r = iperm_[i], c = iperm_[ci[p]];
            rows[fill[std::max(r, c)]++] = std::min(r, c);
        }

    parent_.assign(n_, -1);
    std::vector<std::ptrdiff_t> flag(n_, -1);
    std::vector<std::size_t> lnz(n_, 0);
    for (std::size_t k = 0; k < n_; ++k) {
        flag[k] = static_cast<std::ptrdiff_t>(k);
        for (std::size_t p = col_offsets[k]; p < col_offsets[k + 1]; ++p) {
            std::size_t i = rows[p];
            if (i >= k)
                continue;
            for (; flag[i] != static_cast<std::ptrdiff_t>(k); i = static_cast<std::size_t>(parent_[i])) {
                if (parent_[i] == -1)
                    parent_[i] = static_cast<std::ptrdiff_t>(k);
                ++lnz[i];
                flag[i] = static_cast<std::ptrdiff_t>(k);
            }
        }
    }
    l_offsets_.assign(n_ + 1, 0);
    for (std::size_t k = 0; k < n_; ++k)
        l_offsets_[k + 1] = l_offsets_[k] + lnz[k];
}

namespace {

/// Permuted column layout of one matrix's values against a symbolic analysis.
struct PermutedColumns {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> rows;
    std::vector<double> values;
    double diag_scale = 0.0;
};

PermutedColumns permute_columns(const SparseSymMatrix& a, const LdltSymbolic& s) {
    const std::size_t n = a.n();
    const auto& iperm = s.inverse_permutation();
    const auto& ro = a.row_offsets();
    const auto& ci = a.col_indices();
    const auto& av = a.values();
    PermutedColumns out;
    out.offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p)
            ++out.offsets[std::max(iperm[i], iperm[ci[p]]) + 1];
    std::partial_sum(out.offsets.begin(), out.offsets.end(), out.offsets.begin());
    out.rows.resize(a.nnz());
    out.values.resize(a.nnz());
    std::vector<std::size_t> fill = out.offsets;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = ro[i]; p < ro[i + 1]; ++p) {
            const std::size_t r = iperm[i], c = iperm[ci[p]];
            const std::size_t slot = fill[std::max(r, c)]++;
            out.rows[slot] = std::min(r, c);
            out.values[slot] = av[p];
            if (r == c)
                out.diag_scale = std::max(out.diag_scale, std::abs(av[p]));
        }
    return out;
}

} // namespace

LdltFactorization factor_matrix(const SparseSymMatrix& a, double shift,
                                std::shared_ptr<const LdltSymbolic> symbolic,
                                const FactorOptions& options) {
    if (!symbolic)
        symbolic = std::make_shared<LdltSymbolic>(a, options.ordering);
    if (symbolic->n() != a.n())
        throw DimensionMismatch(symbolic->n(), a.n());
    const std::size_t n = a.n();
    const PermutedColumns cols = permute_columns(a, *symbolic);
    const auto& parent = symbolic->parent();

    LdltFactorization f;
    f.shift_ = shift;
    f.symbolic_ = symbolic;
    f.l_offsets_ = symbolic->factor_column_offsets();
    f.l_rows_.resize(f.l_offsets_.back());
    f.l_values_.resize(f.l_offsets_.back());
    f.d_.assign(n, 0.0);

    Vector y(n, 0.0);
    std::vector<std::size_t> stack(n);
    std::vector<std::ptrdiff_t> flag(n, -1);
    std::vector<std::size_t> lnz(n, 0);
    double scale = cols.diag_scale;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t top = n;
        flag[k] = static_cast<std::ptrdiff_t>(k);
        for (std::size_t p = cols.offsets[k]; p < cols.offsets[k + 1]; ++p) {
            std::size_t i = cols.rows[p];
            y[i] += cols.values[p];
            std::size_t len = 0;
            for (; flag[i] != static_cast<std::ptrdiff_t>(k); i = static_cast<std::size_t>(parent[i])) {
                stack[len++] = i;
                flag[i] = static_cast<std::ptrdiff_t>(k);
            }
            while (len > 0)
                stack[--top] = stack[--len];
        }
        double dk = y[k];
        y[k] = 0.0;
        for (; top < n; ++top) {
            const std::size_t i = stack[top];
            const double yi = y[i];
            y[i] = 0.0;
            const std::size_t begin = f.l_offsets_[i];
            const std::size_t end = begin + lnz[i];
            for (std::size_t p = begin; p < end; ++p)
                y[f.l_rows_[p]] -= f.l_values_[p] * yi;
            const double lki = yi / f.d_[i];
            dk -= lki * yi;
            f.l_rows_[end] = k;
            f.l_values_[end] = lki;
            ++lnz[i];
        }
        const double threshold = options.zero_tolerance * std::max(scale, std::abs(dk));
        if (!(std::abs(dk) >= threshold) || dk == 0.0) {
            if (!options.record_zero_pivots || !std::isfinite(dk))
                throw ZeroPivot(symbolic->permutation()[k]);
            ++f.inertia_.zero;
            dk = std::copysign(std::max(threshold, std::numeric_limits<double>::min()), dk);
        } else if (dk > 0.0) {
            ++f.inertia_.positive;
        } else {
            ++f.inertia_.negative;
        }
        scale = std::max(scale, std::abs(dk));
        f.d_[k] = dk;
    }
    g_factorizations.fetch_add(1, std::memory_order_relaxed);
    return f;
}

void LdltFactorization::solve_in_place(std::span<double> b) const {
    const std::size_t n = d_.size();
    if (b.size() != n)
        throw DimensionMismatch(n, b.size());
    const auto& perm = symbolic_->permutation();
    Vector y(n);
    for (std::size_t k = 0; k < n; ++k)
        y[k] = b[perm[k]];
    for (std::size_t j = 0; j < n; ++j) {
        const double yj = y[j];
        if (yj == 0.0)
            continue;
        for (std::size_t p = l_offsets_[j]; p < l_offsets_[j + 1]; ++p)
            y[l_rows_[p]] -= l_values_[p] * yj;
    }
    for (std::size_t j = 0; j < n; ++j)
        y[j] /= d_[j];
    for (std::size_t j = n; j-- > 0;) {
        double acc = y[j];
        for (std::size_t p = l_offsets_[j]; p < l_offsets_[j + 1]; ++p)
            acc -= l_values_[p] * y[l_rows_[p]];
        y[j] = acc;
    }
    for (std::size_t k = 0; k < n; ++k)
        b[perm[k]] = y[k];
}

Vector LdltFactorization::solve(std::span<const double> b) const {
    Vector x(b.begin(), b.end());
    solve_in_place(x);
    return x;
}

Vector solve_factored(const LdltFactorization& factor, std::span<const double> b) {
    if (factor.inertia().zero > 0)
        throw SingularFactor();
    return factor.solve(b);
}

ShiftedFactorizer::ShiftedFactorizer(std::shared_ptr<const MatrixPencil> pencil,
                                     FactorOptions options)
    : pencil_(std::move(pencil)), options_(options) {
    if (!pencil_)
        throw InvalidArgument("null pencil");
    pattern_ = linear_combination(1.0, pencil_->stiffness(), 1.0, pencil_->mass());
    symbolic_ = std::make_shared<LdltSymbolic>(pattern_, options_.ordering);

    // Locate every K and M entry in the union pattern.
    auto locate = [&](const SparseSymMatrix& m, std::vector<std::size_t>& slots) {
        slots.resize(m.nnz());
        const auto& uo = pattern_.row_offsets();
        const auto& uc = pattern_.col_indices();
        for (std::size_t i = 0; i < m.n(); ++i) {
            std::size_t q = uo[i];
            for (std::size_t p = m.row_offsets()[i]; p < m.row_offsets()[i + 1]; ++p) {
                while (uc[q] != m.col_indices()[p])
                    ++q;
                slots[p] = q;
            }
        }
    };
    locate(pencil_->stiffness(), stiffness_slots_);
    locate(pencil_->mass(), mass_slots_);
}

LdltFactorization ShiftedFactorizer::factor(double shift) const {
    std::vector<double> vals(pattern_.nnz(), 0.0);
    const auto& kv = pencil_->stiffness().values();
    const auto& mv = pencil_->mass().values();
    for (std::size_t p = 0; p < kv.size(); ++p)
        vals[stiffness_slots_[p]] += kv[p];
    for (std::size_t p = 0; p < mv.size(); ++p)
        vals[mass_slots_[p]] -= shift * mv[p];
    SparseSymMatrix shifted(pattern_.n(), pattern_.row_offsets(), pattern_.col_indices(),
                            std::move(vals));
    return factor_matrix(shifted, shift, symbolic_, options_);
}

LdltFactorization ShiftedFactorizer::factor_mass() const {
    std::vector<double> vals(pattern_.nnz(), 0.0);
    const auto& mv = pencil_->mass().values();
    for (std::size_t p = 0; p < mv.size(); ++p)
        vals[mass_slots_[p]] += mv[p];
    SparseSymMatrix mass(pattern_.n(), pattern_.row_offsets(), pattern_.col_indices(),
                         std::move(vals));
    FactorOptions opts = options_;
    opts.record_zero_pivots = false;
    auto f = factor_matrix(mass, 0.0, symbolic_, opts);
    if (f.inertia().negative > 0)
        throw MassNotSPD();
    return f;
}

LdltFactorization ldlt_factor(const MatrixPencil& pencil, double shift,
                              const FactorOptions& options) {
    const auto a = pencil.shifted(shift);
    return factor_matrix(a, shift, nullptr, options);
}

} // namespace fracspec::linalg
