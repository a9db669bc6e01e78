#pragma once

#include "fracspec/fem.hpp"
#include "fracspec/partition.hpp"
#include "fracspec/slicer.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fracspec::cli {

/// Every knob of a batch run. Config files use the long flag names as keys.
struct RunConfig {
    std::string command;
    int dim = 2;
    std::vector<std::size_t> elements{8};
    int order = 2;
    std::vector<int> orders{1, 2, 3, 4, 5, 6, 7, 8};
    std::string bc = "dirichlet";
    std::vector<double> alpha{1.0};
    double mu = 1.0;
    double time = 0.4;
    std::size_t evaluators = 1;
    int na = 7;
    int nb = 3;
    int nc = 10;
    double threshold = 0.2;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    std::string out = "fracspec_out";
    std::string basis_cache;
    std::string mesh_file;
    std::string problem = "poisson";
    std::vector<int> degrees{64, 256, 1024};
    int shifts = 20;
    int probes = 32;
    std::size_t samples = 21;
    std::string sampling = "grid";

    void validate() const;
    partition::RefinementParams refinement() const;
    slicer::SolverOptions solver_options() const;
};

/// Assembled pencil for the first `elements` entry (or the mesh file).
fem::AssembledPencil build_pencil(const RunConfig& config, std::size_t elements, int order);

struct EigsResult {
    slicer::EigenBasis basis;
    slicer::SolveReport report;
    partition::PartitionPlan plan;
    bool from_cache = false;
};

/// Spectral radius, partition, solve and post-processing; reuses the basis
/// cache when configured and records the phase times.
EigsResult compute_basis(const RunConfig& config, const fem::AssembledPencil& pencil);

int cmd_eigs(const RunConfig& config);
int cmd_poisson(const RunConfig& config);
int cmd_diffusion(const RunConfig& config);
int cmd_apply(const RunConfig& config);
int cmd_partition(const RunConfig& config);
int cmd_count(const RunConfig& config);
int cmd_accuracy_sweep(const RunConfig& config);

/// Parses arguments (and an optional --config file) and dispatches.
int run(int argc, char** argv);

} // namespace fracspec::cli
