#include "fgir/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fgir/binio.hpp"
#include "fgir/errors.hpp"
#include "fgir/rng.hpp"

namespace fgir {

SvmTrainResult svm_train(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, const std::vector<std::string>& names,
                         double reg, std::size_t epochs, double lr, std::uint64_t seed) {
    const std::size_t n = features.size();
    const std::size_t w_count = names.size();
    if (n == 0 || w_count == 0) throw DataError("svm_train: empty training set");
    if (labels.size() != n) throw ContractError("svm_train: label count mismatch");
    const std::size_t dim = features[0].size();
    for (const auto& f : features)
        if (f.size() != dim) throw ContractError("svm_train: inconsistent feature dimension");
    if (reg < 0.0) throw ConfigError("svm_train: reg must be >= 0");

    std::vector<std::size_t> per_class(w_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= w_count)
            throw DataError("svm_train: label " + std::to_string(labels[i]) + " outside [0," +
                            std::to_string(w_count) + ") at sample " + std::to_string(i));
        ++per_class[static_cast<std::size_t>(labels[i])];
    }
    for (std::size_t c = 0; c < w_count; ++c)
        if (per_class[c] == 0)
            throw DataError("svm_train: category \"" + names[c] + "\" has zero samples");

    SvmTrainResult result;
    LinearClassifier& clf = result.classifier;
    clf.dim = dim;
    clf.labels = names;
    clf.weights.assign(w_count * dim, 0.0);
    clf.biases.assign(w_count, 0.0);

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            ++t;
            const double eta = reg > 0.0 ? 1.0 / (reg * static_cast<double>(t)) : lr;
            const std::vector<double>& x = features[idx];
            for (std::size_t c = 0; c < w_count; ++c) {
                const double y = static_cast<std::size_t>(labels[idx]) == c ? 1.0 : -1.0;
                double* w = clf.weights.data() + c * dim;
                double margin = clf.biases[c];
                for (std::size_t j = 0; j < dim; ++j) margin += w[j] * x[j];
                margin *= y;
                const double shrink = 1.0 - eta * reg;
                if (margin < 1.0) {
                    for (std::size_t j = 0; j < dim; ++j) w[j] = shrink * w[j] + eta * y * x[j];
                    clf.biases[c] += eta * y;  // bias is not regularized
                } else {
                    for (std::size_t j = 0; j < dim; ++j) w[j] = shrink * w[j];
                }
            }
        }
        result.objective.push_back(svm_objective(clf, features, labels, reg));
    }
    return result;
}

std::pair<std::size_t, std::vector<double>> svm_predict(const LinearClassifier& clf,
                                                        const std::vector<double>& x) {
    if (x.size() != clf.dim)
        throw ContractError("svm_predict: vector length " + std::to_string(x.size()) +
                            " does not match dim " + std::to_string(clf.dim));
    std::vector<double> scores(clf.categories());
    for (std::size_t c = 0; c < clf.categories(); ++c) {
        const double* w = clf.row(c);
        double s = clf.biases[c];
        for (std::size_t j = 0; j < clf.dim; ++j) s += w[j] * x[j];
        scores[c] = s;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = c;
    return {best, scores};
}

double svm_objective(const LinearClassifier& clf, const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, double reg) {
    const std::size_t n = features.size();
    double obj = 0.0;
    for (std::size_t c = 0; c < clf.categories(); ++c) {
        const double* w = clf.row(c);
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < clf.dim; ++j) norm_sq += w[j] * w[j];
        double hinge = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = static_cast<std::size_t>(labels[i]) == c ? 1.0 : -1.0;
            double s = clf.biases[c];
            const double* x = features[i].data();
            for (std::size_t j = 0; j < clf.dim; ++j) s += w[j] * x[j];
            hinge += std::max(0.0, 1.0 - y * s);
        }
        obj += 0.5 * reg * norm_sq + hinge / static_cast<double>(n);
    }
    return obj;
}

namespace {
constexpr char kSvmMagic[4] = {'L', 'S', 'V', 'M'};
constexpr std::uint32_t kSvmVersion = 1;
} // namespace

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path) {
    BinWriter w(path);
    w.magic(kSvmMagic);
    w.u32(kSvmVersion);
    w.u32(static_cast<std::uint32_t>(clf.categories()));
    w.u32(static_cast<std::uint32_t>(clf.dim));
    for (const std::string& label : clf.labels) w.str(label);
    w.f64_array(clf.weights.data(), clf.weights.size());
    w.f64_array(clf.biases.data(), clf.biases.size());
    w.close();
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
    BinReader r(path);
    r.expect_magic(kSvmMagic);
    const std::uint32_t version = r.u32();
    if (version != kSvmVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    LinearClassifier clf;
    const std::uint32_t w_count = r.u32();
    clf.dim = r.u32();
    clf.labels.resize(w_count);
    for (auto& label : clf.labels) label = r.str();
    clf.weights.resize(w_count * clf.dim);
    r.f64_array(clf.weights.data(), clf.weights.size());
    clf.biases.resize(w_count);
    r.f64_array(clf.biases.data(), clf.biases.size());
    r.expect_eof();
    return clf;
}

} // namespace fgir
