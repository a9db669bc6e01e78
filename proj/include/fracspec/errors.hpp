#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fracspec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual)
        : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(actual)) {}
};

/// Raised when a pivot of an LDL^T elimination is numerically zero. The shift
/// coincides with an eigenvalue; callers perturb the shift and refactor.
class ZeroPivot : public Error {
public:
    explicit ZeroPivot(std::size_t row)
        : Error("zero pivot at row " + std::to_string(row)), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class SingularFactor : public Error {
public:
    SingularFactor() : Error("factorization is singular (zero pivots recorded)") {}
};

class MassNotSPD : public Error {
public:
    MassNotSPD() : Error("mass matrix is not symmetric positive definite") {}
};

class SliceIncomplete : public Error {
public:
    SliceIncomplete(std::size_t found, std::size_t expected)
        : Error("slice incomplete: found " + std::to_string(found) + " of " +
                std::to_string(expected) + " eigenpairs"),
          found_(found), expected_(expected) {}
    std::size_t found() const noexcept { return found_; }
    std::size_t expected() const noexcept { return expected_; }

private:
    std::size_t found_;
    std::size_t expected_;
};

class RankDeficientCluster : public Error {
public:
    RankDeficientCluster(std::size_t first, std::size_t size)
        : Error("eigenvector cluster starting at " + std::to_string(first) + " (size " +
                std::to_string(size) + ") is rank deficient") {}
};

class EmptySpectrum : public Error {
public:
    EmptySpectrum() : Error("pencil has no eigenvalues to partition") {}
};

class NonpositiveEigenvalue : public Error {
public:
    explicit NonpositiveEigenvalue(double value)
        : Error("nonpositive eigenvalue " + std::to_string(value) + " in a Dirichlet basis") {}
};

class NeumannNonzeroMean : public Error {
public:
    NeumannNonzeroMean() : Error("Neumann forcing has a nonzero constant-mode component") {}
};

class BasisMismatch : public Error {
public:
    using Error::Error;
};

} // namespace fracspec
