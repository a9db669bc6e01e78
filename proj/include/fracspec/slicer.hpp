#pragma once

#include "fracspec/linalg.hpp"
#include "fracspec/partition.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fracspec::slicer {

using linalg::Vector;

/// Eigenpairs wanted in [lo, hi); the shift sits at the midpoint.
struct SliceTask {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t expected_count = 0;
    double shift = 0.0;
    std::size_t index = 0;

    static SliceTask make(double lo, double hi, std::size_t expected, std::size_t index = 0);
};

struct EigenPair {
    double value = 0.0;
    Vector vector;
    double residual = 0.0;  ///< ||K phi - theta M phi||_2
};

struct BasisMetadata {
    std::string mesh_hash;
    int order = 0;
    std::size_t elements = 0;
    std::string bc;
    double tolerance = 0.0;
    double cluster_tol = 0.0;
};

/// Ascending eigenvalues with M-orthonormal eigenvectors stored column-major.
class EigenBasis {
public:
    EigenBasis() = default;
    EigenBasis(std::shared_ptr<const linalg::MatrixPencil> pencil, Vector values, Vector vectors,
               Vector residuals, BasisMetadata metadata = {});

    std::size_t n() const noexcept { return n_; }
    std::size_t count() const noexcept { return values_.size(); }
    const Vector& values() const noexcept { return values_; }
    double value(std::size_t k) const { return values_.at(k); }
    std::span<const double> vector(std::size_t k) const;
    const Vector& vectors() const noexcept { return vectors_; }
    Vector& mutable_vectors() noexcept { return vectors_; }
    const Vector& residuals() const noexcept { return residuals_; }
    const BasisMetadata& metadata() const noexcept { return metadata_; }
    void set_metadata(BasisMetadata m) { metadata_ = std::move(m); }
    const linalg::MatrixPencil& pencil() const { return *pencil_; }
    std::shared_ptr<const linalg::MatrixPencil> pencil_ptr() const noexcept { return pencil_; }

private:
    std::shared_ptr<const linalg::MatrixPencil> pencil_;
    std::size_t n_ = 0;
    Vector values_;
    Vector vectors_;
    Vector residuals_;
    BasisMetadata metadata_;
};

struct SolverOptions {
    /// Scaled residual bound accepted for a returned pair.
    double tolerance = 1e-8;
    /// Ritz convergence, relative to the shift-inverted Ritz value.
    double ritz_tolerance = 1e-12;
    /// Slices expecting more pairs are bisected before the Krylov solve.
    std::size_t max_block = 48;
    int max_depth = 8;
    int max_restarts = 400;
    int max_attempts = 12;
    double cluster_tol = 1e-8;
    std::uint64_t seed = 0;
};

struct SliceStats {
    std::size_t index = 0;
    std::size_t found = 0;
    std::size_t factorizations = 0;
    std::size_t operator_applications = 0;
    std::size_t restarts = 0;
    std::size_t subslices = 1;
    double seconds = 0.0;
};

/// Shift-invert Lanczos with thick restart. Returns converged pairs whose
/// values lie in the slice (plus any found within 1e-10 of its ends),
/// sorted ascending and M-orthonormal.
std::vector<EigenPair> solve_slice(const linalg::ShiftedFactorizer& factorizer,
                                   const SliceTask& task, const SolverOptions& options = {},
                                   SliceStats* stats = nullptr);

/// Wall times in seconds, in the order they occur in a run.
struct PhaseTimes {
    double spectral_radius = 0.0;
    double partition = 0.0;
    double solve = 0.0;
    double postprocess = 0.0;
    double total() const noexcept { return spectral_radius + partition + solve + postprocess; }
};

struct EvaluatorLogEntry {
    std::size_t evaluator = 0;
    std::size_t task = 0;
    double start = 0.0;  ///< seconds since run() began
    double seconds = 0.0;
};

/// P evaluators sharing the tasks round-robin; evaluator e runs tasks
/// e, e + P, ... in order. Evaluators map onto at most worker_count(P) threads.
class EvaluatorPool {
public:
    explicit EvaluatorPool(std::size_t evaluators);

    std::size_t size() const noexcept { return evaluators_; }
    std::size_t threads() const noexcept { return threads_; }
    void run(std::size_t tasks, const std::function<void(std::size_t task, std::size_t evaluator)>& body);
    const std::vector<EvaluatorLogEntry>& log() const noexcept { return log_; }

private:
    std::size_t evaluators_;
    std::size_t threads_;
    std::vector<EvaluatorLogEntry> log_;
    std::mutex mutex_;
};

struct SolveReport {
    PhaseTimes phases;
    std::vector<SliceStats> slices;
    std::size_t factorizations = 0;
    std::size_t duplicates_removed = 0;
};

/// Solves every slice of the plan on the pool, merges, deduplicates boundary
/// copies and orthonormalizes clusters. Fills solve and postprocess times.
EigenBasis solve_all(const linalg::ShiftedFactorizer& factorizer,
                     const partition::PartitionPlan& plan, EvaluatorPool& pool,
                     const SolverOptions& options = {}, SolveReport* report = nullptr);

/// Clusters with relative gaps <= cluster_tol * max(1, |theta|) are
/// orthonormalized by modified Gram-Schmidt in the M-inner product; every
/// vector ends with phi^T M phi = 1.
EigenBasis postprocess(EigenBasis basis, double cluster_tol = 1e-8);

/// max |phi_i^T M phi_j - delta_ij| over all pairs.
double orthonormality_error(const EigenBasis& basis);
/// Largest ||K phi - theta M phi|| / ((||K||_1 + |theta| ||M||_1) ||phi||).
double max_scaled_residual(const EigenBasis& basis);

/// Directory with eigenvalues.txt, eigenvectors.bin and meta.json.
void save_basis(const EigenBasis& basis, const std::string& directory);
/// Loads and validates a saved basis against the pencil. When `expected` is
/// given its mesh hash, order and boundary condition must match.
EigenBasis load_basis(const std::string& directory,
                      std::shared_ptr<const linalg::MatrixPencil> pencil,
                      const std::optional<BasisMetadata>& expected = std::nullopt,
                      double orthonormality_tol = 1e-8);

} // namespace fracspec::slicer
