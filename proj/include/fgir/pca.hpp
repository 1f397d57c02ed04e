#pragma once

#include <filesystem>
#include <vector>

#include "fgir/tensor.hpp"

namespace fgir {

// PCA fitting and projection for descriptor compression, plus the small
// vector utilities used throughout the feature pipeline.

struct PcaModel {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> mean;         // length in_dim
    std::vector<double> basis;        // out_dim rows of length in_dim, orthonormal
    std::vector<double> eigenvalues;  // descending, length out_dim

    const double* basis_row(std::size_t r) const { return basis.data() + r * in_dim; }
};

// Mean-centered covariance eigendecomposition (cyclic Jacobi). Covariance uses
// the n_samples-1 denominator. Basis rows are the top eigenvectors with the
// sign convention that each row's largest-magnitude entry is positive.
// Requires n_samples >= 2 and out_dim <= min(in_dim, n_samples-1).
PcaModel pca_fit(const std::vector<std::vector<double>>& samples, std::size_t out_dim);

// basis * (x - mean).
std::vector<double> pca_transform(const PcaModel& model, const std::vector<double>& x);

// x / ||x||_2 when the norm exceeds 1e-12; zero vectors pass through unchanged.
std::vector<double> l2_normalize(const std::vector<double>& x);

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b);

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b);

void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

} // namespace fgir
