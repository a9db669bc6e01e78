#include "fracspec/errors.hpp"
#include "fracspec/slicer.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fracspec::slicer {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "eigenvector files are little-endian");

void write_text_values(const fs::path& path, const Vector& values) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw InvalidArgument("cannot write '" + path.string() + "'");
    for (double v : values)
        std::fprintf(f, "%.17g\n", v);
    std::fclose(f);
}

} // namespace

void save_basis(const EigenBasis& basis, const std::string& directory) {
    const fs::path dir(directory);
    fs::create_directories(dir);
    write_text_values(dir / "eigenvalues.txt", basis.values());

    std::ofstream bin(dir / "eigenvectors.bin", std::ios::binary);
    if (!bin)
        throw InvalidArgument("cannot write eigenvectors to '" + directory + "'");
    bin.write(reinterpret_cast<const char*>(basis.vectors().data()),
              static_cast<std::streamsize>(basis.vectors().size() * sizeof(double)));
    if (!bin)
        throw Error("failed writing eigenvectors.bin");

    const auto& m = basis.metadata();
    nlohmann::json meta = {
        {"N", basis.n()},
        {"count", basis.count()},
        {"order", m.order},
        {"elements", m.elements},
        {"bc", m.bc},
        {"mesh_hash", m.mesh_hash},
        {"tolerance", m.tolerance},
        {"cluster_tol", m.cluster_tol},
        {"max_residual", basis.residuals().empty() ? 0.0 : *std::max_element(basis.residuals().begin(), basis.residuals().end())},
    };
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

EigenBasis load_basis(const std::string& directory, std::shared_ptr<const linalg::MatrixPencil> pencil,
                      const std::optional<BasisMetadata>& expected, double orthonormality_tol) {
    const fs::path dir(directory);
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in)
        throw BasisMismatch("no basis found in '" + directory + "'");
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw BasisMismatch(std::string("malformed meta.json: ") + e.what());
    }
    BasisMetadata m;
    m.order = meta.value("order", 0);
    m.elements = meta.value("elements", std::size_t{0});
    m.bc = meta.value("bc", std::string{});
    m.mesh_hash = meta.value("mesh_hash", std::string{});
    m.tolerance = meta.value("tolerance", 0.0);
    m.cluster_tol = meta.value("cluster_tol", 0.0);
    const auto n = meta.value("N", std::size_t{0});
    const auto count = meta.value("count", std::size_t{0});

    if (n != pencil->n())
        throw BasisMismatch("basis dimension " + std::to_string(n) + " does not match pencil size " +
                            std::to_string(pencil->n()));
    if (expected && (expected->mesh_hash != m.mesh_hash || expected->order != m.order || expected->bc != m.bc))
        throw BasisMismatch("basis metadata does not match the requested discretization");

    Vector values;
    {
        std::ifstream in(dir / "eigenvalues.txt");
        double v = 0.0;
        while (in >> v)
            values.push_back(v);
    }
    if (values.size() != count)
        throw BasisMismatch("eigenvalues.txt holds " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(count));
    for (double v : values)
        if (!std::isfinite(v))
            throw BasisMismatch("non-finite eigenvalue in saved basis");

    Vector vectors(n * count);
    std::ifstream bin(dir / "eigenvectors.bin", std::ios::binary);
    bin.read(reinterpret_cast<char*>(vectors.data()), static_cast<std::streamsize>(vectors.size() * sizeof(double)));
    if (!bin || bin.peek() != std::char_traits<char>::eof())
        throw BasisMismatch("eigenvectors.bin has the wrong size");

    EigenBasis basis(std::move(pencil), std::move(values), std::move(vectors), {}, m);
    // Cheap checks: unit M-norms and orthogonality of neighbouring vectors.
    const auto& mass = basis.pencil().mass();
    Vector mx(n);
    for (std::size_t k = 0; k < basis.count(); ++k) {
        const auto phi = basis.vector(k);
        mass.multiply(phi, mx);
        if (std::abs(linalg::dot(phi, mx) - 1.0) > orthonormality_tol)
            throw BasisMismatch("saved eigenvector " + std::to_string(k) + " is not M-normalized");
        if (k + 1 < basis.count() && std::abs(linalg::dot(basis.vector(k + 1), mx)) > orthonormality_tol)
            throw BasisMismatch("saved eigenvectors " + std::to_string(k) + ", " + std::to_string(k + 1) +
                                " are not M-orthogonal");
    }
    return basis;
}

} // namespace fracspec::slicer
