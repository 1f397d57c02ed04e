#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgir/engine.hpp"
#include "fgir/manifest.hpp"
#include "fgir/model.hpp"

namespace fgir {

// Offline orchestration shared by the CLI and the regression suites: train
// the coarse network on the full auxiliary split and one category-specific
// network per family, then fit the PCA models and the category classifier on
// auxiliary features only (queries and the database stay unseen).

// Desk-scale defaults. The coarse network runs at 32 px over two blocks; the
// category networks run at 64 px over three blocks.
NetworkConfig default_coarse_net(std::size_t num_species, std::uint64_t seed);
NetworkConfig default_fine_net(std::size_t num_species, std::uint64_t seed);

struct TrainedModels {
    CnNetsModel coarse;                    // trained on all auxiliary species
    std::vector<std::string> categories;   // sorted family names
    std::vector<CnNetsModel> per_category; // aligned with categories
    std::vector<double> coarse_loss_trace;
    std::vector<std::vector<double>> category_loss_traces;
};

TrainedModels train_pipeline_models(const DatasetManifest& manifest,
                                    const std::filesystem::path& data_dir, const TrainConfig& tc);

struct FitResult {
    PcaModel pca_coarse;
    std::vector<PcaModel> pca_img;  // per category, shared output dim
    std::vector<PcaModel> pca_reg;
    LinearClassifier classifier;    // trained on every auxiliary sample
    double holdout_accuracy = 0.0;  // family prediction on the held-out fifth
    std::size_t region_fallbacks = 0;
};

FitResult fit_pipeline(const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                       const TrainedModels& models, const RetrievalConfig& cfg,
                       std::uint64_t seed);

// Model/fit artifact persistence used by the `train` and `fit` subcommands;
// file names follow the index directory layout.
void save_trained_models(const TrainedModels& models, const std::filesystem::path& dir);
TrainedModels load_trained_models(const std::filesystem::path& dir,
                                  const std::vector<std::string>& categories);
void save_fit_result(const FitResult& fit, const std::vector<std::string>& categories,
                     const std::filesystem::path& dir);
FitResult load_fit_result(const std::filesystem::path& dir,
                          const std::vector<std::string>& categories);

} // namespace fgir
