#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgir/tensor.hpp"

namespace fgir {

// One-vs-rest linear SVM used to route queries and database images to a
// coarse category.

struct LinearClassifier {
    std::size_t dim = 0;
    std::vector<std::string> labels;   // category names, W of them
    std::vector<double> weights;       // W rows of length dim
    std::vector<double> biases;        // length W

    std::size_t categories() const { return labels.size(); }
    const double* row(std::size_t c) const { return weights.data() + c * dim; }
};

struct SvmTrainResult {
    LinearClassifier classifier;
    std::vector<double> objective;  // regularized hinge objective after each epoch
};

// Deterministic per-sample subgradient descent on the one-vs-rest hinge loss
// with L2 regularization. With reg > 0 the step size follows 1/(reg * t) over
// the global sample counter t; with reg == 0 the constant rate `lr` is used.
// Every category in `names` must have at least one sample.
SvmTrainResult svm_train(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, const std::vector<std::string>& names,
                         double reg = 1e-4, std::size_t epochs = 20, double lr = 0.1,
                         std::uint64_t seed = 1);

// argmax of w.x + b; ties resolve to the lowest index.
std::pair<std::size_t, std::vector<double>> svm_predict(const LinearClassifier& clf,
                                                        const std::vector<double>& x);

double svm_objective(const LinearClassifier& clf, const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, double reg);

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path);
LinearClassifier load_classifier(const std::filesystem::path& path);

} // namespace fgir
