#pragma once

#include <cstdint>
#include <vector>

#include "fgir/tensor.hpp"

namespace fgir {

// Layer kernels: forward plus explicit backward for each operation needed to
// train the two-branch network. All functions are pure; training state is
// mutated only by the caller through returned values. Convolutions are
// 'same' shaped: odd kernel, zero padding (k-1)/2, stride 1.

struct Conv2dGrads {
    Tensor input;              // [n, c_in, h, w]
    Tensor weights;            // [c_out, c_in, k, k]
    std::vector<double> bias;  // [c_out]
};

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const std::vector<double>& bias);
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// 2x2 windows, stride 2; spatial extents must be even. Gradient routes to the
// window argmax, ties broken by first position in row-major window order.
Tensor maxpool2_forward(const Tensor& input);
Tensor maxpool2_backward(const Tensor& input, const Tensor& upstream);

// Global average pooling: [n,c,h,w] -> [n,c]. The backward pass spreads each
// upstream value uniformly as g/(h*w) over its map, so gradients within one
// map are bitwise identical.
Tensor gap_forward(const Tensor& input);
Tensor gap_backward(const std::vector<std::size_t>& input_shape, const Tensor& upstream);

// Per-channel batch normalization over [n,c,M,M]. Statistics are collected
// per channel over the m = n*M*M activations of that channel, with the biased
// (m-denominator) variance in both the forward pass and the running update.
struct BnState {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;
    std::uint64_t batches_seen = 0;  // zero means running statistics are uninitialized

    static BnState make(std::size_t channels, double eps = 1e-5, double momentum = 0.1);
};

struct BnCache {
    std::vector<double> mean;  // mu_B per channel
    std::vector<double> var;   // sigma^2_B per channel (biased)
    Tensor xhat;               // normalized activations
};

struct BnGrads {
    Tensor input;                // dL/dx
    std::vector<double> gamma;   // dL/dgamma = sum dL/dy_i * xhat_i
    std::vector<double> beta;    // dL/dbeta  = sum dL/dy_i
    Tensor xhat_grad;            // dL/dxhat, uniform per map when fed from GAP
};

// Train-phase forward: normalizes with batch statistics, updates the running
// exponential averages in `state`, and fills `cache` for the backward pass.
Tensor batch_norm_train(const Tensor& input, BnState& state, BnCache& cache);

// Inference-phase forward using running statistics; requires at least one
// prior training batch.
Tensor batch_norm_infer(const Tensor& input, const BnState& state);

BnGrads batch_norm_backward(const Tensor& input, const BnState& state, const BnCache& cache,
                            const Tensor& upstream);

// Mean softmax cross-entropy over the batch; logits [n,C], labels in [0,C).
double softmax_ce_forward(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_ce_backward(const Tensor& logits, const std::vector<int>& labels);

// params - lr * grads, as a new tensor.
Tensor sgd_step(const Tensor& params, const Tensor& grads, double lr);
std::vector<double> sgd_step(const std::vector<double>& params, const std::vector<double>& grads,
                             double lr);

} // namespace fgir
