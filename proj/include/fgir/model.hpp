#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "fgir/layers.hpp"
#include "fgir/tensor.hpp"

namespace fgir {

// Two-branch convolutional network with a shared trunk. Both branches append
// their own trunk tail and a 1x1 projection to one confidence map per
// species; the Conv branch pools the maps directly while the Norm branch
// batch-normalizes them first. Trunk blocks are conv3x3 -> relu -> maxpool2,
// so each block halves the spatial extent.

struct NetworkConfig {
    std::size_t input_size = 32;             // square input extent in pixels
    std::vector<std::size_t> trunk = {16, 48};  // channels per conv block
    std::size_t shared_depth = 1;            // leading trunk blocks shared by both branches
    std::size_t feature_channels = 48;       // channels of the last pre-head layer
    std::size_t num_species = 2;             // confidence maps per branch
    std::uint64_t seed = 1;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
};

struct ConvBlock {
    Tensor weights;             // [c_out, c_in, 3, 3]
    std::vector<double> bias;   // [c_out]
};

struct BranchParams {
    std::vector<ConvBlock> tail;  // trunk blocks S+1..end
    Tensor head_weights;          // [C, N, 1, 1]
    std::vector<double> head_bias;
};

struct CnNetsModel {
    NetworkConfig config;
    std::vector<ConvBlock> shared;  // trunk blocks 1..S, single-instanced
    BranchParams conv_branch;
    BranchParams norm_branch;
    BnState bn;  // over the C channels of the norm head output

    std::size_t map_size() const { return config.input_size >> config.trunk.size(); }
    std::size_t param_count() const;
};

enum class Phase { train, infer };

// Deterministic initialization from config.seed; weights are uniform in
// +/- sqrt(6/(fan_in+fan_out)), biases zero, gamma one, beta zero.
CnNetsModel build_model(const NetworkConfig& config);

struct ClassifyOutput {
    Tensor conv_scores;  // [n, C]
    Tensor norm_scores;  // [n, C]
    Tensor combined;     // (conv + norm) / 2
    Tensor conv_maps;    // [n, C, M, M]
    Tensor norm_maps;    // [n, C, M, M], after batch norm
};

// Pure forward pass. Phase::train normalizes with batch statistics but does
// not touch the running averages; Phase::infer requires initialized running
// statistics. conv_scores is exactly gap(conv_maps), and likewise for the
// Norm branch.
ClassifyOutput forward_classify(const CnNetsModel& model, const Tensor& batch, Phase phase);

// Which branch losses drive a training step.
enum class BranchSelect { both, conv_only, norm_only };

// Optional window into one training step, used by gradient-flow checks.
struct TrainDiagnostics {
    Tensor conv_map_grad;  // dL/d(conv head maps)
    Tensor norm_map_grad;  // dL/d(bn output maps)
    Tensor xhat_grad;      // dL/dxhat inside the norm-branch BN
};

// One SGD step on one batch: train-phase forward (updates BN running
// statistics), combined loss, backward, parameter update. Returns the batch
// loss. Shared-trunk gradients from the two branches accumulate before the
// update, so one step through either branch moves both branches' view.
double train_step(CnNetsModel& model, const Tensor& batch, const std::vector<int>& labels,
                  double lr, BranchSelect select = BranchSelect::both,
                  TrainDiagnostics* diag = nullptr);

// Epoch loop over deterministic seed-derived shuffles. Labels must already be
// remapped to [0, C); offending records are named by position.
std::vector<double> train(CnNetsModel& model, const std::vector<Tensor>& images,
                          const std::vector<int>& labels, const TrainConfig& tc);

struct ConvFeature {
    std::vector<double> feature;  // length N, gap of the pre-head activation
    Tensor maps;                  // [C, M, M] confidence maps of the Conv branch
};

// Single image [1,h,w] or [h,w]; spatial extent must equal config.input_size.
ConvFeature extract_conv_feature(const CnNetsModel& model, const Tensor& image);

// [f_conv, f_norm] concatenated, length 2N. The first N entries equal
// extract_conv_feature's vector bitwise.
std::vector<double> extract_cn_feature(const CnNetsModel& model, const Tensor& image);

// Map with the maximum mean activation; ties resolve to the lowest index.
std::pair<std::size_t, Tensor> select_confidence_map(const Tensor& maps);

// Binary persistence; round trips are bit-exact.
void save_model(const CnNetsModel& model, const std::filesystem::path& path);
CnNetsModel load_model(const std::filesystem::path& path);

} // namespace fgir
