#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgir/feature_store.hpp"
#include "fgir/manifest.hpp"
#include "fgir/model.hpp"
#include "fgir/pca.hpp"
#include "fgir/svm.hpp"

namespace fgir {

// Online coarse-to-fine pipeline: offline index build, exhaustive coarse
// top-K search, category routing, fine-grained re-ranking over the top-K
// block, and one round of query expansion. All rankings are exact; ties
// break by ascending image id so every output is deterministic.

struct RetrievalConfig {
    std::size_t coarse_dim = 32;
    std::size_t fine_dim_per_part = 512;  // clamped at build time to what the data supports
    std::size_t top_k = 10000;            // coarse cut K, clamped to the database size
    std::size_t qe_k = 5;                 // descriptors averaged by query expansion
    double threshold = 0.5;               // confidence-map binarization
    double min_region_frac = 0.01;        // small-region cutoff
};

struct RankedEntry {
    std::string id;
    double distance;
};

// Ordered (id, distance) pairs. Distances are non-decreasing within each
// stage's block; after fine re-ranking the tail keeps its coarse distances,
// so monotonicity holds per block rather than across the seam.
using RankedList = std::vector<RankedEntry>;

struct EngineIndex {
    RetrievalConfig cfg;
    std::vector<std::string> categories;              // family names, position = category id
    FeatureStore coarse;                               // dim = effective coarse_dim
    FeatureStore fine;                                 // dim = 2 * effective fine dim
    std::unordered_map<std::string, int> routing;      // image id -> predicted category
    LinearClassifier classifier;
    PcaModel pca_coarse;
    std::vector<PcaModel> pca_img;                     // per category
    std::vector<PcaModel> pca_reg;                     // per category
    CnNetsModel coarse_model;
    std::vector<CnNetsModel> category_models;          // one per category

    std::size_t fallback_regions = 0;  // images indexed with the full-image fallback
};

// Descriptors derived from one image.
struct QueryFeatures {
    std::vector<double> coarse;       // l2(pca(f_conv)) at coarse scale
    Tensor conv_maps;                 // [C, M, M] coarse-model confidence maps
    int category = -1;                // classifier prediction on the coarse feature
    std::vector<double> fine;         // concat of image-part and region-part descriptors
    bool region_fallback = false;     // region extraction fell back to the full image
};

// Feature extraction shared between index build and querying. `image` is the
// raw [h,w] grayscale tensor; resizing to each network's input size happens
// here. When `fine_parts` is false only the coarse half is produced.
QueryFeatures extract_features(const EngineIndex& index, const Tensor& image, bool fine_parts);

// Builds all stores over the database slice (database + distractor roles) of
// the manifest. `data_dir` anchors the manifest's relative paths.
EngineIndex build_index(const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                        CnNetsModel coarse_model, std::vector<CnNetsModel> category_models,
                        std::vector<std::string> categories, LinearClassifier classifier,
                        PcaModel pca_coarse, std::vector<PcaModel> pca_img,
                        std::vector<PcaModel> pca_reg, const RetrievalConfig& cfg);

struct CoarseResult {
    RankedList ranked;   // ascending distance, truncated at K
    int category = -1;
};

CoarseResult coarse_query(const EngineIndex& index, const std::vector<double>& q_coarse,
                          std::size_t k);

// Re-ranks exactly the first min(K, size) entries of the coarse list by fine
// distance; entries beyond K keep their coarse order after the block.
RankedList fine_rerank(const EngineIndex& index, const RankedList& coarse_ranked, std::size_t k,
                       const std::vector<double>& q_fine);

// One round of query expansion: re-rank the same top-K block with the
// l2-normalized mean of the top-qe_k stored fine descriptors.
RankedList query_expand(const EngineIndex& index, const RankedList& reranked, std::size_t k,
                        std::size_t qe_k);

enum class Stage { coarse, fine, fine_qe };

Stage parse_stage(const std::string& name);  // "coarse" | "fine" | "fine+qe"
std::string stage_name(Stage stage);

// Wall-clock milliseconds per pipeline stage.
struct StageTimings {
    double coarse_feature_ms = 0.0;
    double coarse_retrieval_ms = 0.0;
    double classifier_ms = 0.0;
    double fine_feature_ms = 0.0;
    double fine_retrieval_ms = 0.0;

    double total() const {
        return coarse_feature_ms + coarse_retrieval_ms + classifier_ms + fine_feature_ms +
               fine_retrieval_ms;
    }
};

struct QueryOutcome {
    RankedList coarse_ranked;
    RankedList fine_ranked;    // empty unless the fine stage ran
    RankedList final_ranked;   // ranking at the requested stage
    int category = -1;
    Tensor confidence_map;     // selected coarse-model map, image-sized and normalized
    bool region_fallback = false;
    StageTimings timings;
};

QueryOutcome full_query(const EngineIndex& index, const Tensor& image, Stage stage);

// Index directory persistence. Writes stores, classifier, PCA and model
// files, routing table, and a plain-text metadata file.
void save_index(const EngineIndex& index, const std::filesystem::path& dir);
EngineIndex load_index(const std::filesystem::path& dir);

} // namespace fgir
