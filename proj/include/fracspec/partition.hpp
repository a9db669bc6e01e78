#pragma once

#include "fracspec/counting.hpp"
#include "fracspec/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fracspec::partition {

using counting::InertiaCounter;
using counting::RoundStats;

struct SpectrumBounds {
    double lo = 0.0;
    double hi = 0.0;        ///< estimate * margin
    double estimate = 0.0;  ///< power-iteration Rayleigh quotient
    double margin = 1.1;
    int iterations = 0;
    bool converged = true;
};

/// Power iteration on M^{-1} K. Falls back to a 1.5 margin (converged = false)
/// when max_iters is reached first.
SpectrumBounds estimate_spectral_radius(const linalg::ShiftedFactorizer& factorizer,
                                        double tol = 1e-3, int max_iters = 200,
                                        std::uint64_t seed = 0x5eed);

/// Contiguous slices [splits[i], splits[i+1]) with their eigenvalue counts.
struct PartitionPlan {
    std::vector<double> splits;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    /// Number of eigenvalues >= splits.back(); zero once the plan covers the spectrum.
    std::size_t above = 0;
    /// Counting work spent building this plan.
    RoundStats stats;
    /// Set when empty slices were merged and fewer slices remain than requested.
    bool merged = false;

    std::size_t slices() const noexcept { return counts.size(); }
    std::size_t max_load() const;
    std::size_t min_load() const;
    double ideal_load() const;
};

struct RefinementParams {
    int n_a = 7;
    int n_b = 3;
    int n_c = 10;
    double imbalance_threshold = 0.2;

    void validate() const;
};

/// Equal-length slices over [lo, hi], counted in a single round.
PartitionPlan partition_uniform(const SpectrumBounds& bounds, std::size_t slices,
                                InertiaCounter& counter);

/// Bisection for a split in [lo, hi] leaving `target_left` eigenvalues below
/// it. Returns the visited split whose left count is closest to the target.
struct SplitResult {
    double split = 0.0;
    std::size_t left = 0;
    int steps = 0;
};
SplitResult binary_search_split(InertiaCounter& counter, double lo, double hi,
                                std::size_t target_left, int n_c);

PartitionPlan partition_tree(const SpectrumBounds& bounds, std::size_t slices, int n_c,
                             InertiaCounter& counter);

PartitionPlan refine_global(const PartitionPlan& plan, int n_a, InertiaCounter& counter);

PartitionPlan refine_local(const PartitionPlan& plan, int n_b, int n_c, double threshold,
                           InertiaCounter& counter);

/// Uniform start, global then local refinement, validation and merging of
/// empty slices. The uniform counts form the first global round, so at most
/// n_a + 2 n_b n_c sequential rounds are spent.
PartitionPlan partition(const SpectrumBounds& bounds, std::size_t slices,
                        const RefinementParams& params, InertiaCounter& counter);

/// Drops empty slices by merging them into a neighbour.
PartitionPlan merge_empty_slices(PartitionPlan plan);

/// One "lo hi count" line per slice.
void write_plan(std::ostream& out, const PartitionPlan& plan);
PartitionPlan read_plan(std::istream& in);
void save_plan(const std::string& path, const PartitionPlan& plan);
PartitionPlan load_plan(const std::string& path);

} // namespace fracspec::partition
