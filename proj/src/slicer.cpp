#include "fracspec/slicer.hpp"

#include "fracspec/counting.hpp"
#include "fracspec/errors.hpp"
#include "fracspec/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace fracspec::slicer {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using linalg::LdltFactorization;
using linalg::MatrixPencil;
using linalg::ShiftedFactorizer;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

Vec spmv(const linalg::SparseSymMatrix& a, const double* x) {
    Vec y(static_cast<Eigen::Index>(a.n()));
    a.multiply({x, a.n()}, {y.data(), a.n()});
    return y;
}

double m_dot(const linalg::SparseSymMatrix& m, const double* x, const double* y) {
    const Vec my = spmv(m, y);
    return Eigen::Map<const Vec>(x, my.size()).dot(my);
}

// Modified Gram-Schmidt in the M-inner product over columns [first, last) of
// a column-major block; columns before `first` are not touched.
void mgs_block(const linalg::SparseSymMatrix& mass, double* cols, std::size_t n, std::size_t first,
               std::size_t last) {
    const auto ni = static_cast<Eigen::Index>(n);
    std::vector<Vec> mcols;
    for (std::size_t j = first; j < last; ++j) {
        Eigen::Map<Vec> v(cols + j * n, ni);
        const double before = std::sqrt(std::abs(m_dot(mass, v.data(), v.data())));
        // Two sweeps: the second removes what rounding left after the first.
        for (int sweep = 0; sweep < 2; ++sweep)
            for (std::size_t i = first; i < j; ++i) {
                const auto& mq = mcols[i - first];
                v -= mq.dot(v) * Eigen::Map<const Vec>(cols + i * n, ni);
            }
        Vec mv = spmv(mass, v.data());
        const double nrm = std::sqrt(std::abs(v.dot(mv)));
        if (!(nrm > 1e-6 * before))
            throw RankDeficientCluster(first, last - first);
        v /= nrm;
        mv /= nrm;
        mcols.push_back(std::move(mv));
    }
}

void normalize_column(const linalg::SparseSymMatrix& mass, double* col, std::size_t n) {
    const double nrm = std::sqrt(std::abs(m_dot(mass, col, col)));
    if (nrm > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            col[i] /= nrm;
}

// Cluster boundaries over ascending values: [starts[c], starts[c+1]).
std::vector<std::size_t> cluster_starts(const std::vector<double>& values, double tol) {
    std::vector<std::size_t> starts{0};
    for (std::size_t k = 1; k < values.size(); ++k)
        if (!(tol > 0.0 && values[k] - values[k - 1] <= tol * std::max(1.0, std::abs(values[k]))))
            starts.push_back(k);
    starts.push_back(values.size());
    return starts;
}

void postprocess_pairs(const linalg::SparseSymMatrix& mass, std::vector<EigenPair>& pairs,
                       double cluster_tol) {
    if (pairs.empty())
        return;
    const std::size_t n = pairs.front().vector.size();
    std::vector<double> values;
    for (const auto& p : pairs)
        values.push_back(p.value);
    const auto starts = cluster_starts(values, cluster_tol);
    for (std::size_t c = 0; c + 1 < starts.size(); ++c) {
        const std::size_t b = starts[c], e = starts[c + 1];
        if (e - b < 2) {
            normalize_column(mass, pairs[b].vector.data(), n);
            continue;
        }
        std::vector<double> block((e - b) * n);
        for (std::size_t k = b; k < e; ++k)
            std::copy(pairs[k].vector.begin(), pairs[k].vector.end(), block.begin() + static_cast<std::ptrdiff_t>((k - b) * n));
        try {
            mgs_block(mass, block.data(), n, 0, e - b);
        } catch (const RankDeficientCluster&) {
            throw RankDeficientCluster(b, e - b);
        }
        for (std::size_t k = b; k < e; ++k)
            std::copy(block.begin() + static_cast<std::ptrdiff_t>((k - b) * n),
                      block.begin() + static_cast<std::ptrdiff_t>((k - b + 1) * n), pairs[k].vector.begin());
    }
}

// Joins pair lists of two adjacent intervals meeting at `boundary`. Upper
// copies of eigenvectors already present in the lower list are dropped.
std::size_t merge_adjacent(const linalg::SparseSymMatrix& mass, std::vector<EigenPair>& lower,
                           std::vector<EigenPair> upper, double boundary, double delta) {
    std::vector<std::size_t> near_lower;
    for (std::size_t i = 0; i < lower.size(); ++i)
        if (lower[i].value >= boundary - delta)
            near_lower.push_back(i);
    std::size_t dropped = 0;
    if (!near_lower.empty()) {
        const std::size_t n = lower.front().vector.size();
        const auto ni = static_cast<Eigen::Index>(n);
        // Orthonormal basis of the lower copies near the boundary.
        std::vector<double> q;
        for (std::size_t i : near_lower)
            q.insert(q.end(), lower[i].vector.begin(), lower[i].vector.end());
        const std::size_t nq = near_lower.size();
        try {
            mgs_block(mass, q.data(), n, 0, nq);
        } catch (const RankDeficientCluster&) {
        }
        std::vector<EigenPair> kept;
        for (auto& p : upper) {
            if (p.value < boundary + delta) {
                Vec v = Eigen::Map<const Vec>(p.vector.data(), ni);
                const double before = std::sqrt(std::abs(m_dot(mass, v.data(), v.data())));
                for (std::size_t j = 0; j < nq; ++j) {
                    Eigen::Map<const Vec> qj(q.data() + j * n, ni);
                    v -= m_dot(mass, qj.data(), v.data()) * qj;
                }
                const double after = std::sqrt(std::abs(m_dot(mass, v.data(), v.data())));
                if (after < 0.5 * before) {
                    ++dropped;
                    continue;
                }
            }
            kept.push_back(std::move(p));
        }
        upper = std::move(kept);
    }
    for (auto& p : upper)
        lower.push_back(std::move(p));
    std::stable_sort(lower.begin(), lower.end(),
                     [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
    return dropped;
}

class SliceSolver {
public:
    SliceSolver(const ShiftedFactorizer& factorizer, const SolverOptions& options, SliceStats& stats,
                std::uint64_t seed)
        : factorizer_(factorizer), pencil_(factorizer.pencil()), options_(options), stats_(stats),
          seed_(seed), n_(pencil_.n()) {}

    std::vector<EigenPair> solve(double lo, double hi, std::size_t expected, int depth,
                                 std::uint64_t path, std::optional<std::size_t> geq_lo) {
        if (expected == 0)
            return {};
        if (expected > options_.max_block && depth < options_.max_depth) {
            auto split = bisect(lo, hi, expected, geq_lo);
            if (split) {
                const auto [x, geq_x, g_lo] = *split;
                ++stats_.subslices;
                auto left = solve(lo, x, g_lo - geq_x, depth + 1, combine(path, 1), g_lo);
                auto right = solve(x, hi, expected - (g_lo - geq_x), depth + 1, combine(path, 2), geq_x);
                merge_adjacent(pencil_.mass(), left, std::move(right), x, delta(lo, hi));
                return left;
            }
        }
        return krylov(lo, hi, expected, path);
    }

private:
    double delta(double lo, double hi) const { return 1e-10 * std::max(std::abs(lo), std::abs(hi)); }

    counting::CountResult count(double shift) {
        const double eps = 1e-8 * scale_hint_;
        for (int attempt = 0;; ++attempt) {
            const double a = attempt == 0 ? shift : shift - eps * std::ldexp(1.0, attempt - 1);
            try {
                ++stats_.factorizations;
                const auto f = factorizer_.factor(a);
                return {f.inertia().positive + f.inertia().zero, a, attempt};
            } catch (const ZeroPivot&) {
                if (attempt >= 3)
                    throw;
            }
        }
    }

    struct Split {
        double x;
        std::size_t geq_x;
        std::size_t geq_lo;
    };

    // Finds an interior point leaving between a quarter and three quarters of
    // the slice on each side.
    std::optional<Split> bisect(double lo, double hi, std::size_t expected,
                                std::optional<std::size_t> geq_lo) {
        scale_hint_ = std::max(std::abs(lo), std::abs(hi));
        const std::size_t glo = geq_lo ? *geq_lo : count(lo).count;
        double a = lo, b = hi;
        std::optional<Split> best;
        std::size_t best_dist = expected;
        for (int step = 0; step < 8; ++step) {
            const auto r = count(0.5 * (a + b));
            if (!(r.shift > lo && r.shift < hi))
                break;
            const std::size_t left = glo >= r.count ? glo - r.count : 0;
            const std::size_t half = expected / 2;
            const std::size_t dist = left > half ? left - half : half - left;
            if (left > 0 && left < expected && dist < best_dist) {
                best = Split{r.shift, r.count, glo};
                best_dist = dist;
            }
            if (4 * left >= expected && 4 * left <= 3 * expected)
                break;
            if (2 * left < expected)
                a = r.shift;
            else
                b = r.shift;
        }
        return best;
    }

    // A shift sitting on an eigenvalue is moved by a fraction of the slice
    // width; a nearly singular operator would spoil the other Ritz pairs.
    LdltFactorization factor_near(double shift, double width) {
        const double eps = width > 0.0 ? 1e-3 * width : 1e-8 * std::max(std::abs(shift), 1e-300);
        for (int attempt = 0;; ++attempt) {
            const double a = attempt == 0 ? shift : shift - eps * std::ldexp(1.0, attempt - 1);
            try {
                ++stats_.factorizations;
                return factorizer_.factor(a);
            } catch (const ZeroPivot&) {
                if (attempt >= 3)
                    throw;
            }
        }
    }

    // Shift-invert Krylov-Schur on (K - aM)^{-1} M in the M-inner product.
    std::vector<EigenPair> krylov(double lo, double hi, std::size_t expected, std::uint64_t path) {
        const auto ni = static_cast<Eigen::Index>(n_);
        const double dlt = delta(lo, hi);
        const LdltFactorization f = factor_near(0.5 * (lo + hi), hi - lo);
        const double a = f.shift();
        const double reach = std::max(hi - a, a - lo) + dlt;
        const double nu_cut = 1.0 / reach;
        const auto in_band = [&](double theta) { return theta >= lo - dlt && theta < hi + dlt; };
        const auto in_slice = [&](double theta) { return theta >= lo && theta < hi; };

        Mat locked(ni, 0), mlocked(ni, 0);
        std::vector<double> locked_values;
        std::size_t locked_strict = 0;
        std::size_t m_base = std::max<std::size_t>(2 * expected + 16, 32);

        auto orthogonalize = [&](Vec& w, const Mat& v, const Mat& mv, Eigen::Index cols, Vec* h) {
            if (h)
                h->setZero(cols);
            // Classical Gram-Schmidt, repeated only when the first pass cancelled heavily.
            for (int pass = 0; pass < 2; ++pass) {
                const double before = w.norm();
                if (locked.cols() > 0) {
                    const Vec c = mlocked.transpose() * w;
                    w.noalias() -= locked * c;
                }
                if (cols > 0) {
                    const Vec g = mv.leftCols(cols).transpose() * w;
                    w.noalias() -= v.leftCols(cols) * g;
                    if (h)
                        *h += g;
                }
                if (w.norm() > 0.7071 * before)
                    break;
            }
        };

        std::mt19937_64 rng(combine(seed_, path));
        std::normal_distribution<double> normal;
        auto random_vector = [&](Vec& w, const Mat& v, const Mat& mv, Eigen::Index cols, Vec& mw) {
            for (int tries = 0; tries < 4; ++tries) {
                for (Eigen::Index i = 0; i < ni; ++i)
                    w[i] = normal(rng);
                orthogonalize(w, v, mv, cols, nullptr);
                mw = spmv(pencil_.mass(), w.data());
                const double nrm = std::sqrt(std::abs(w.dot(mw)));
                if (nrm > 1e-8) {
                    w /= nrm;
                    mw /= nrm;
                    return true;
                }
            }
            return false;
        };

        for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
            const std::size_t space = n_ - static_cast<std::size_t>(locked.cols());
            if (space == 0)
                break;
            const std::size_t remaining = expected > locked_strict ? expected - locked_strict : 1;
            const std::size_t m = std::min(space, std::max<std::size_t>(2 * remaining + 16, m_base));
            const auto mi = static_cast<Eigen::Index>(m);

            Mat v(ni, mi + 1), mv(ni, mi + 1);
            Mat t = Mat::Zero(mi, mi);
            {
                Vec w(ni), mw(ni);
                if (!random_vector(w, v, mv, 0, mw))
                    break;
                v.col(0) = w;
                mv.col(0) = mw;
            }

            Eigen::Index k = 0;
            double beta_last = 0.0;
            Vec w(ni), h;
            std::vector<Eigen::Index> selected;
            Mat y;
            Vec nu;
            bool finished = false;
            bool grow = false;
            for (int restart = 0; restart <= options_.max_restarts && !finished; ++restart) {
                if (restart > 0)
                    ++stats_.restarts;
                for (Eigen::Index j = k; j < mi; ++j) {
                    w = mv.col(j);
                    f.solve_in_place({w.data(), n_});
                    ++stats_.operator_applications;
                    orthogonalize(w, v, mv, j + 1, &h);
                    t.block(0, j, j + 1, 1) = h;
                    t.block(j, 0, 1, j + 1) = h.transpose();
                    Vec mw = spmv(pencil_.mass(), w.data());
                    double beta = std::sqrt(std::abs(w.dot(mw)));
                    const double scale = h.cwiseAbs().maxCoeff();
                    if (static_cast<std::size_t>(j + 1) == space) {
                        beta_last = 0.0;
                        break;
                    }
                    if (!(beta > 1e-12 * scale)) {
                        // Invariant subspace: continue with a fresh direction.
                        if (!random_vector(w, v, mv, j + 1, mw)) {
                            beta_last = 0.0;
                            break;
                        }
                        beta = 0.0;
                        v.col(j + 1) = w;
                        mv.col(j + 1) = mw;
                    } else {
                        v.col(j + 1) = w / beta;
                        mv.col(j + 1) = mw / beta;
                    }
                    if (j + 1 < mi) {
                        t(j + 1, j) = beta;
                        t(j, j + 1) = beta;
                    }
                    beta_last = beta;
                }

                Eigen::SelfAdjointEigenSolver<Mat> es(t);
                nu = es.eigenvalues();
                y = es.eigenvectors();
                std::vector<Eigen::Index> order(static_cast<std::size_t>(mi));
                std::iota(order.begin(), order.end(), 0);
                std::sort(order.begin(), order.end(), [&](Eigen::Index p, Eigen::Index q) {
                    return std::abs(nu[p]) > std::abs(nu[q]);
                });
                const double numax = std::abs(nu[order.front()]);
                const double floor = 100.0 * std::numeric_limits<double>::epsilon() * numax;
                auto converged = [&](Eigen::Index i) {
                    return std::abs(beta_last * y(mi - 1, i)) <= options_.ritz_tolerance * std::abs(nu[i]) + floor;
                };

                std::size_t n_reach = 0, strict = 0;
                bool reach_converged = true;
                bool beyond_converged = false;
                bool beyond_seen = false;
                for (Eigen::Index i : order) {
                    if (std::abs(nu[i]) >= nu_cut) {
                        ++n_reach;
                        if (!converged(i))
                            reach_converged = false;
                        else if (in_slice(a + 1.0 / nu[i]))
                            ++strict;
                    } else if (!beyond_seen) {
                        beyond_seen = true;
                        beyond_converged = converged(i);
                    }
                }
                const bool whole_space = beta_last == 0.0;
                if (reach_converged && (locked_strict + strict >= expected || beyond_converged || whole_space)) {
                    finished = true;
                } else if (n_reach + 2 >= m && !whole_space) {
                    finished = true;
                    grow = true;
                } else if (restart == options_.max_restarts) {
                    finished = true;
                }
                if (finished) {
                    selected.clear();
                    for (Eigen::Index i : order)
                        if (std::abs(nu[i]) >= nu_cut && converged(i) && in_band(a + 1.0 / nu[i]))
                            selected.push_back(i);
                    break;
                }

                // Thick restart: keep the Ritz vectors nearest the shift.
                const auto keep = static_cast<Eigen::Index>(
                    std::clamp<std::size_t>(n_reach + (m - n_reach) / 2, 1, m - 1));
                Mat ysel(mi, keep);
                for (Eigen::Index c = 0; c < keep; ++c)
                    ysel.col(c) = y.col(order[static_cast<std::size_t>(c)]);
                Mat vk = v.leftCols(mi) * ysel;
                Mat mvk = mv.leftCols(mi) * ysel;
                v.col(keep) = v.col(mi);
                mv.col(keep) = mv.col(mi);
                v.leftCols(keep) = vk;
                mv.leftCols(keep) = mvk;
                t.setZero();
                for (Eigen::Index c = 0; c < keep; ++c) {
                    t(c, c) = nu[order[static_cast<std::size_t>(c)]];
                    const double b = beta_last * ysel(mi - 1, c);
                    if (keep < mi) {
                        t(keep, c) = b;
                        t(c, keep) = b;
                    }
                }
                k = keep;
            }

            // Lock the selected pairs.
            if (!selected.empty()) {
                const auto s = static_cast<Eigen::Index>(selected.size());
                Mat ysel(mi, s);
                for (Eigen::Index c = 0; c < s; ++c)
                    ysel.col(c) = y.col(selected[static_cast<std::size_t>(c)]);
                Mat xs = v.leftCols(mi) * ysel;
                Mat mxs = mv.leftCols(mi) * ysel;
                const Eigen::Index old = locked.cols();
                locked.conservativeResize(Eigen::NoChange, old + s);
                mlocked.conservativeResize(Eigen::NoChange, old + s);
                locked.rightCols(s) = xs;
                mlocked.rightCols(s) = mxs;
                for (Eigen::Index c = 0; c < s; ++c) {
                    const double theta = a + 1.0 / nu[selected[static_cast<std::size_t>(c)]];
                    locked_values.push_back(theta);
                    if (in_slice(theta))
                        ++locked_strict;
                }
            }
            if (locked_strict >= expected)
                break;
            if (grow || selected.empty())
                m_base = m_base + m_base / 2;
        }

        if (locked_strict < expected) {
            std::size_t band = 0;
            for (double theta : locked_values)
                band += in_band(theta) ? 1 : 0;
            if (band < expected)
                throw SliceIncomplete(locked_strict, expected);
        }

        // Rayleigh quotients and residuals.
        std::vector<EigenPair> out;
        out.reserve(locked_values.size());
        for (Eigen::Index c = 0; c < locked.cols(); ++c) {
            EigenPair p;
            p.vector.assign(locked.col(c).data(), locked.col(c).data() + ni);
            const Vec kx = spmv(pencil_.stiffness(), p.vector.data());
            const double xmx = locked.col(c).dot(mlocked.col(c));
            p.value = locked.col(c).dot(kx) / xmx;
            p.residual = (kx - p.value * mlocked.col(c)).norm();
            out.push_back(std::move(p));
        }
        std::sort(out.begin(), out.end(), [](const EigenPair& x, const EigenPair& z) { return x.value < z.value; });
        return out;
    }

    const ShiftedFactorizer& factorizer_;
    const MatrixPencil& pencil_;
    const SolverOptions& options_;
    SliceStats& stats_;
    std::uint64_t seed_;
    std::size_t n_;
    double scale_hint_ = 1.0;
};

} // namespace

SliceTask SliceTask::make(double lo, double hi, std::size_t expected, std::size_t index) {
    if (!(lo < hi))
        throw InvalidArgument("slice requires lo < hi");
    return {lo, hi, expected, 0.5 * (lo + hi), index};
}

EigenBasis::EigenBasis(std::shared_ptr<const MatrixPencil> pencil, Vector values, Vector vectors,
                       Vector residuals, BasisMetadata metadata)
    : pencil_(std::move(pencil)), values_(std::move(values)), vectors_(std::move(vectors)),
      residuals_(std::move(residuals)), metadata_(std::move(metadata)) {
    if (!pencil_)
        throw InvalidArgument("basis requires a pencil");
    n_ = pencil_->n();
    if (vectors_.size() != n_ * values_.size())
        throw DimensionMismatch(n_ * values_.size(), vectors_.size());
    if (residuals_.empty())
        residuals_.assign(values_.size(), 0.0);
    if (residuals_.size() != values_.size())
        throw DimensionMismatch(values_.size(), residuals_.size());
    if (!std::is_sorted(values_.begin(), values_.end()))
        throw InvalidArgument("basis eigenvalues must be ascending");
}

std::span<const double> EigenBasis::vector(std::size_t k) const {
    if (k >= count())
        throw InvalidArgument("eigenvector index out of range");
    return {vectors_.data() + k * n_, n_};
}

std::vector<EigenPair> solve_slice(const ShiftedFactorizer& factorizer, const SliceTask& task,
                                   const SolverOptions& options, SliceStats* stats) {
    if (!(task.lo < task.hi))
        throw InvalidArgument("slice requires lo < hi");
    SliceStats local;
    SliceStats& s = stats ? *stats : local;
    s.index = task.index;
    const double start = now_seconds();
    SliceSolver solver(factorizer, options, s, combine(options.seed, task.index));
    auto pairs = solver.solve(task.lo, task.hi, task.expected_count, 0, 0, std::nullopt);
    s.found = pairs.size();
    s.seconds = now_seconds() - start;
    return pairs;
}

EvaluatorPool::EvaluatorPool(std::size_t evaluators)
    : evaluators_(std::max<std::size_t>(evaluators, 1)), threads_(worker_count(evaluators_)) {}

void EvaluatorPool::run(std::size_t tasks,
                        const std::function<void(std::size_t, std::size_t)>& body) {
    log_.clear();
    const double origin = now_seconds();
    // Evaluators are claimed by threads in order; each runs its own tasks in sequence.
    parallel_for(evaluators_, threads_, [&](std::size_t e) {
        for (std::size_t t = e; t < tasks; t += evaluators_) {
            const double start = now_seconds();
            body(t, e);
            const double end = now_seconds();
            std::lock_guard lock(mutex_);
            log_.push_back({e, t, start - origin, end - start});
        }
    });
    std::sort(log_.begin(), log_.end(),
              [](const EvaluatorLogEntry& a, const EvaluatorLogEntry& b) { return a.task < b.task; });
}

EigenBasis solve_all(const ShiftedFactorizer& factorizer, const partition::PartitionPlan& plan,
                     EvaluatorPool& pool, const SolverOptions& options, SolveReport* report) {
    const auto& pencil = factorizer.pencil();
    const std::size_t n = pencil.n();
    const std::size_t slices = plan.slices();
    if (slices == 0 || plan.splits.size() != slices + 1)
        throw InvalidArgument("invalid partition plan");
    const double t0 = now_seconds();

    std::vector<std::size_t> offset(slices + 1, 0);
    for (std::size_t i = 0; i < slices; ++i)
        offset[i + 1] = offset[i] + plan.counts[i];
    const std::size_t total = offset.back();

    // Slices write straight into the final storage; anything that does not fit
    // the planned layout goes to a side list merged afterwards.
    Vector values(total, 0.0), residuals(total, 0.0);
    Vector vectors(total * n, 0.0);
    std::vector<std::vector<EigenPair>> extras(slices);
    std::vector<std::size_t> written(slices, 0);
    std::vector<SliceStats> stats(slices);

    pool.run(slices, [&](std::size_t i, std::size_t) {
        const auto task = SliceTask::make(plan.splits[i], plan.splits[i + 1], plan.counts[i], i);
        auto pairs = solve_slice(factorizer, task, options, &stats[i]);
        postprocess_pairs(pencil.mass(), pairs, options.cluster_tol);
        std::size_t w = 0;
        std::vector<EigenPair> rest;
        for (auto& p : pairs) {
            const bool strict = p.value >= task.lo && p.value < task.hi;
            if (strict && w < plan.counts[i]) {
                const std::size_t col = offset[i] + w++;
                values[col] = p.value;
                residuals[col] = p.residual;
                std::copy(p.vector.begin(), p.vector.end(), vectors.begin() + static_cast<std::ptrdiff_t>(col * n));
                p.vector = {};
            } else {
                rest.push_back(std::move(p));
            }
        }
        written[i] = w;
        extras[i] = std::move(rest);
    });
    const double t1 = now_seconds();

    std::size_t duplicates = 0;
    bool regular = true;
    for (std::size_t i = 0; i < slices; ++i)
        regular = regular && written[i] == plan.counts[i] && extras[i].empty();

    if (!regular) {
        // General path: rebuild the pair lists and merge slice by slice.
        std::vector<EigenPair> merged;
        for (std::size_t i = 0; i < slices; ++i) {
            std::vector<EigenPair> pairs;
            for (std::size_t w = 0; w < written[i]; ++w) {
                const std::size_t col = offset[i] + w;
                EigenPair p;
                p.value = values[col];
                p.residual = residuals[col];
                p.vector.assign(vectors.begin() + static_cast<std::ptrdiff_t>(col * n),
                                vectors.begin() + static_cast<std::ptrdiff_t>((col + 1) * n));
                pairs.push_back(std::move(p));
            }
            for (auto& p : extras[i])
                pairs.push_back(std::move(p));
            std::sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
            if (i == 0) {
                merged = std::move(pairs);
            } else {
                const double rho = std::max(std::abs(plan.splits.front()), std::abs(plan.splits.back()));
                duplicates += merge_adjacent(pencil.mass(), merged, std::move(pairs), plan.splits[i], 1e-10 * rho);
            }
        }
        if (merged.size() != total)
            throw SliceIncomplete(merged.size(), total);
        vectors.assign(total * n, 0.0);
        for (std::size_t k = 0; k < total; ++k) {
            values[k] = merged[k].value;
            residuals[k] = merged[k].residual;
            std::copy(merged[k].vector.begin(), merged[k].vector.end(), vectors.begin() + static_cast<std::ptrdiff_t>(k * n));
        }
    }

    // Coordinator pass over clusters touching a slice boundary.
    const auto starts = cluster_starts(values, options.cluster_tol);
    for (std::size_t c = 0; c + 1 < starts.size(); ++c) {
        const std::size_t b = starts[c], e = starts[c + 1];
        if (e - b < 2)
            continue;
        bool crosses = false;
        for (std::size_t i = 1; i < slices; ++i)
            crosses = crosses || (offset[i] > b && offset[i] < e);
        if (crosses || !regular)
            mgs_block(pencil.mass(), vectors.data(), n, b, e);
    }
    const double t2 = now_seconds();

    if (report) {
        report->phases.solve = t1 - t0;
        report->phases.postprocess = t2 - t1;
        report->slices = stats;
        report->factorizations = 0;
        for (const auto& s : stats)
            report->factorizations += s.factorizations;
        report->duplicates_removed = duplicates;
    }
    BasisMetadata meta;
    meta.tolerance = options.tolerance;
    meta.cluster_tol = options.cluster_tol;
    return EigenBasis(factorizer.pencil_ptr(), std::move(values), std::move(vectors),
                      std::move(residuals), meta);
}

EigenBasis postprocess(EigenBasis basis, double cluster_tol) {
    const std::size_t n = basis.n();
    const auto& mass = basis.pencil().mass();
    auto& vectors = basis.mutable_vectors();
    const auto starts = cluster_starts(basis.values(), cluster_tol);
    for (std::size_t c = 0; c + 1 < starts.size(); ++c) {
        const std::size_t b = starts[c], e = starts[c + 1];
        if (e - b == 1)
            normalize_column(mass, vectors.data() + b * n, n);
        else
            mgs_block(mass, vectors.data(), n, b, e);
    }
    return basis;
}

double orthonormality_error(const EigenBasis& basis) {
    const auto n = static_cast<Eigen::Index>(basis.n());
    const auto c = static_cast<Eigen::Index>(basis.count());
    if (c == 0)
        return 0.0;
    Eigen::Map<const Mat> phi(basis.vectors().data(), n, c);
    Mat mphi(n, c);
    for (Eigen::Index k = 0; k < c; ++k)
        basis.pencil().mass().multiply({phi.col(k).data(), basis.n()}, {mphi.col(k).data(), basis.n()});
    Mat gram = phi.transpose() * mphi;
    gram -= Mat::Identity(c, c);
    return gram.cwiseAbs().maxCoeff();
}

double max_scaled_residual(const EigenBasis& basis) {
    const auto& k = basis.pencil().stiffness();
    const auto& m = basis.pencil().mass();
    const double k1 = k.norm1(), m1 = m.norm1();
    double worst = 0.0;
    for (std::size_t j = 0; j < basis.count(); ++j) {
        const auto phi = basis.vector(j);
        const Vec kx = spmv(k, phi.data());
        const Vec mx = spmv(m, phi.data());
        const double theta = basis.value(j);
        const double r = (kx - theta * mx).norm();
        const double scale = (k1 + std::abs(theta) * m1) * Eigen::Map<const Vec>(phi.data(), kx.size()).norm();
        worst = std::max(worst, r / scale);
    }
    return worst;
}

} // namespace fracspec::slicer
