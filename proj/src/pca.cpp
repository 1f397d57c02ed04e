#include "fgir/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fgir/binio.hpp"
#include "fgir/errors.hpp"

namespace fgir {

namespace {

// Cyclic Jacobi diagonalization of a symmetric matrix. `a` is d x d row-major
// and is destroyed; eigenvectors come back as columns of `v`.
void jacobi_eigen(std::vector<double>& a, std::vector<double>& v, std::size_t d) {
    v.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    if (d == 1) return;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-26) break;

        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = a[i * d + p], aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = a[p * d + i], aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = v[i * d + p], viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
}

} // namespace

PcaModel pca_fit(const std::vector<std::vector<double>>& samples, std::size_t out_dim) {
    const std::size_t n = samples.size();
    if (n < 2) throw ConfigError("pca_fit: need at least 2 samples");
    const std::size_t d = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != d) throw ContractError("pca_fit: inconsistent sample dimension");
    if (out_dim == 0 || out_dim > std::min(d, n - 1))
        throw ConfigError("pca_fit: out_dim " + std::to_string(out_dim) +
                          " exceeds min(in_dim, n_samples-1) = " +
                          std::to_string(std::min(d, n - 1)));

    PcaModel model;
    model.in_dim = d;
    model.out_dim = out_dim;
    model.mean.assign(d, 0.0);
    for (const auto& s : samples)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += s[j];
    for (std::size_t j = 0; j < d; ++j) model.mean[j] /= static_cast<double>(n);

    // covariance, denominator n-1
    std::vector<double> cov(d * d, 0.0);
    std::vector<double> centered(d);
    for (const auto& s : samples) {
        for (std::size_t j = 0; j < d; ++j) centered[j] = s[j] - model.mean[j];
        for (std::size_t j = 0; j < d; ++j) {
            const double cj = centered[j];
            if (cj == 0.0) continue;
            for (std::size_t k = j; k < d; ++k) cov[j * d + k] += cj * centered[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = j; k < d; ++k) {
            cov[j * d + k] *= inv;
            cov[k * d + j] = cov[j * d + k];
        }

    std::vector<double> vecs;
    jacobi_eigen(cov, vecs, d);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cov[a * d + a] > cov[b * d + b]; });

    model.basis.resize(out_dim * d);
    model.eigenvalues.resize(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
        const std::size_t col = order[r];
        model.eigenvalues[r] = cov[col * d + col];
        double* row = model.basis.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) row[j] = vecs[j * d + col];
        // sign convention: make the largest-magnitude entry positive
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(row[j]) > std::abs(row[arg])) arg = j;
        if (row[arg] < 0.0)
            for (std::size_t j = 0; j < d; ++j) row[j] = -row[j];
    }
    return model;
}

std::vector<double> pca_transform(const PcaModel& model, const std::vector<double>& x) {
    if (x.size() != model.in_dim)
        throw ContractError("pca_transform: vector length " + std::to_string(x.size()) +
                            " does not match in_dim " + std::to_string(model.in_dim));
    std::vector<double> out(model.out_dim, 0.0);
    std::vector<double> centered(model.in_dim);
    for (std::size_t j = 0; j < model.in_dim; ++j) centered[j] = x[j] - model.mean[j];
    for (std::size_t r = 0; r < model.out_dim; ++r) {
        const double* row = model.basis_row(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < model.in_dim; ++j) acc += row[j] * centered[j];
        out[r] = acc;
    }
    return out;
}

std::vector<double> l2_normalize(const std::vector<double>& x) {
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= 1e-12) return x;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / norm;
    return out;
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("euclidean_distance: length mismatch");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

namespace {
constexpr char kPcaMagic[4] = {'P', 'C', 'A', 'M'};
constexpr std::uint32_t kPcaVersion = 1;
} // namespace

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
    BinWriter w(path);
    w.magic(kPcaMagic);
    w.u32(kPcaVersion);
    w.u32(static_cast<std::uint32_t>(model.in_dim));
    w.u32(static_cast<std::uint32_t>(model.out_dim));
    w.f64_array(model.mean.data(), model.mean.size());
    w.f64_array(model.basis.data(), model.basis.size());
    w.f64_array(model.eigenvalues.data(), model.eigenvalues.size());
    w.close();
}

PcaModel load_pca(const std::filesystem::path& path) {
    BinReader r(path);
    r.expect_magic(kPcaMagic);
    const std::uint32_t version = r.u32();
    if (version != kPcaVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    PcaModel model;
    model.in_dim = r.u32();
    model.out_dim = r.u32();
    model.mean.resize(model.in_dim);
    r.f64_array(model.mean.data(), model.mean.size());
    model.basis.resize(model.out_dim * model.in_dim);
    r.f64_array(model.basis.data(), model.basis.size());
    model.eigenvalues.resize(model.out_dim);
    r.f64_array(model.eigenvalues.data(), model.eigenvalues.size());
    r.expect_eof();
    return model;
}

} // namespace fgir
