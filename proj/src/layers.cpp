#include "fgir/layers.hpp"

#include <algorithm>
#include <cmath>

namespace fgir {

namespace {

// Unpacks one image into a [c_in*k*k, h*w] patch matrix so the convolution
// becomes a single matrix product. Zero padding of (k-1)/2 keeps the spatial
// size. `col` must hold c_in*k*k*h*w doubles.
void im2col(const double* img, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
            double* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
    std::size_t row = 0;
    for (std::size_t ic = 0; ic < c_in; ++ic) {
        const double* plane = img + ic * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                double* dst = col + row * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(dst + y * w, dst + (y + 1) * w, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
                        dst[y * w + x] =
                            (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[sx];
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back into an image, the adjoint of im2col.
void col2im_add(const double* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
                double* img) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
    std::size_t row = 0;
    for (std::size_t ic = 0; ic < c_in; ++ic) {
        double* plane = img + ic * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                const double* src = col + row * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    double* dst = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        dst[sx] += src[y * w + x];
                    }
                }
            }
        }
    }
}

// C[m x n] += A[m x k] * B[k x n]; inner loop over contiguous n vectorizes.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A^T where A is [k x m], times B [k x n].
void gemm_at_b_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                   std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T where B is [k x n].
void gemm_a_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                   std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

void check_conv_args(const Tensor& input, const Tensor& weights, const std::vector<double>& bias) {
    require_rank(input, 4, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    if (weights.extent(2) != weights.extent(3) || weights.extent(2) % 2 == 0)
        throw ContractError("conv2d: kernel must be square with odd extent");
    if (input.extent(1) != weights.extent(1))
        throw ContractError("conv2d: input channels " + std::to_string(input.extent(1)) +
                            " do not match kernel channels " + std::to_string(weights.extent(1)));
    if (bias.size() != weights.extent(0))
        throw ContractError("conv2d: bias length does not match output channels");
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const std::vector<double>& bias) {
    check_conv_args(input, weights, bias);
    const std::size_t n = input.extent(0), c_in = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t c_out = weights.extent(0), k = weights.extent(2);
    const std::size_t patch = c_in * k * k, plane = h * w;

    Tensor out({n, c_out, h, w});
    std::vector<double> col(patch * plane);
    for (std::size_t i = 0; i < n; ++i) {
        im2col(input.data() + i * c_in * plane, c_in, h, w, k, col.data());
        double* dst = out.data() + i * c_out * plane;
        for (std::size_t oc = 0; oc < c_out; ++oc)
            std::fill(dst + oc * plane, dst + (oc + 1) * plane, bias[oc]);
        gemm_acc(weights.data(), col.data(), dst, c_out, patch, plane);
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
    const std::size_t n = input.extent(0), c_in = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t c_out = weights.extent(0), k = weights.extent(2);
    require_shape(upstream, {n, c_out, h, w}, "conv2d upstream");
    const std::size_t patch = c_in * k * k, plane = h * w;

    Conv2dGrads g;
    g.input = Tensor(input.shape());
    g.weights = Tensor(weights.shape());
    g.bias.assign(c_out, 0.0);

    std::vector<double> col(patch * plane);
    std::vector<double> dcol(patch * plane);
    for (std::size_t i = 0; i < n; ++i) {
        const double* up = upstream.data() + i * c_out * plane;
        im2col(input.data() + i * c_in * plane, c_in, h, w, k, col.data());
        // dW += up * col^T, db += row sums of up
        gemm_a_bt_acc(up, col.data(), g.weights.data(), c_out, plane, patch);
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            double acc = 0.0;
            const double* urow = up + oc * plane;
            for (std::size_t j = 0; j < plane; ++j) acc += urow[j];
            g.bias[oc] += acc;
        }
        // dcol = W^T * up, scattered back into the input gradient
        std::fill(dcol.begin(), dcol.end(), 0.0);
        gemm_at_b_acc(weights.data(), up, dcol.data(), c_out, patch, plane);
        col2im_add(dcol.data(), c_in, h, w, k, g.input.data() + i * c_in * plane);
    }
    return g;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    if (!input.same_shape(upstream)) throw ContractError("relu: upstream shape mismatch");
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

Tensor maxpool2_forward(const Tensor& input) {
    require_rank(input, 4, "maxpool2 input");
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw ContractError("maxpool2: spatial extents must be even, got " +
                            Tensor::shape_str(input.shape()));
    Tensor out({n, c, h / 2, w / 2});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; y += 2)
                for (std::size_t x = 0; x < w; x += 2) {
                    double m = input.at(i, ch, y, x);
                    m = std::max(m, input.at(i, ch, y, x + 1));
                    m = std::max(m, input.at(i, ch, y + 1, x));
                    m = std::max(m, input.at(i, ch, y + 1, x + 1));
                    out.at(i, ch, y / 2, x / 2) = m;
                }
    return out;
}

Tensor maxpool2_backward(const Tensor& input, const Tensor& upstream) {
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    require_shape(upstream, {n, c, h / 2, w / 2}, "maxpool2 upstream");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; y += 2)
                for (std::size_t x = 0; x < w; x += 2) {
                    // first row-major window position wins ties
                    std::size_t by = y, bx = x;
                    double m = input.at(i, ch, y, x);
                    if (input.at(i, ch, y, x + 1) > m) { m = input.at(i, ch, y, x + 1); by = y; bx = x + 1; }
                    if (input.at(i, ch, y + 1, x) > m) { m = input.at(i, ch, y + 1, x); by = y + 1; bx = x; }
                    if (input.at(i, ch, y + 1, x + 1) > m) { by = y + 1; bx = x + 1; }
                    grad.at(i, ch, by, bx) = upstream.at(i, ch, y / 2, x / 2);
                }
    return grad;
}

Tensor gap_forward(const Tensor& input) {
    require_rank(input, 4, "gap input");
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t plane = input.extent(2) * input.extent(3);
    Tensor out({n, c});
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* p = input.data() + (i * c + ch) * plane;
            double acc = 0.0;
            for (std::size_t j = 0; j < plane; ++j) acc += p[j];
            out.at(i, ch) = acc * inv;
        }
    return out;
}

Tensor gap_backward(const std::vector<std::size_t>& input_shape, const Tensor& upstream) {
    if (input_shape.size() != 4) throw ContractError("gap: input shape must be rank 4");
    require_shape(upstream, {input_shape[0], input_shape[1]}, "gap upstream");
    const std::size_t plane = input_shape[2] * input_shape[3];
    Tensor grad(input_shape);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double g = upstream[i] * inv;
        double* p = grad.data() + i * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = g;
    }
    return grad;
}

BnState BnState::make(std::size_t channels, double eps, double momentum) {
    BnState s;
    s.gamma.assign(channels, 1.0);
    s.beta.assign(channels, 0.0);
    s.running_mean.assign(channels, 0.0);
    s.running_var.assign(channels, 1.0);
    s.eps = eps;
    s.momentum = momentum;
    return s;
}

namespace {

void check_bn_input(const Tensor& input, const BnState& state) {
    require_rank(input, 4, "batch_norm input");
    if (input.extent(1) != state.gamma.size())
        throw ContractError("batch_norm: channel count " + std::to_string(input.extent(1)) +
                            " does not match state channels " + std::to_string(state.gamma.size()));
}

} // namespace

Tensor batch_norm_train(const Tensor& input, BnState& state, BnCache& cache) {
    check_bn_input(input, state);
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t plane = input.extent(2) * input.extent(3);
    const std::size_t m = n * plane;
    if (m == 0) throw ContractError("batch_norm: empty batch");
    const double inv_m = 1.0 / static_cast<double>(m);

    cache.mean.assign(c, 0.0);
    cache.var.assign(c, 0.0);
    cache.xhat = Tensor(input.shape());
    Tensor out(input.shape());

    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = input.data() + (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) sum += p[j];
        }
        const double mu = sum * inv_m;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = input.data() + (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = p[j] - mu;
                sq += d * d;
            }
        }
        const double var = sq * inv_m;  // biased, denominator m
        const double inv_std = 1.0 / std::sqrt(var + state.eps);
        const double g = state.gamma[ch], b = state.beta[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = input.data() + (i * c + ch) * plane;
            double* xh = cache.xhat.data() + (i * c + ch) * plane;
            double* o = out.data() + (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                xh[j] = (p[j] - mu) * inv_std;
                o[j] = g * xh[j] + b;
            }
        }
        cache.mean[ch] = mu;
        cache.var[ch] = var;
        state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mu;
        state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * var;
    }
    state.batches_seen += 1;
    return out;
}

Tensor batch_norm_infer(const Tensor& input, const BnState& state) {
    check_bn_input(input, state);
    if (state.batches_seen == 0)
        throw ContractError("batch_norm: uninitialized running statistics");
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t plane = input.extent(2) * input.extent(3);
    Tensor out(input.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double inv_std = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
        const double mu = state.running_mean[ch];
        const double g = state.gamma[ch], b = state.beta[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = input.data() + (i * c + ch) * plane;
            double* o = out.data() + (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) o[j] = g * (p[j] - mu) * inv_std + b;
        }
    }
    return out;
}

BnGrads batch_norm_backward(const Tensor& input, const BnState& state, const BnCache& cache,
                            const Tensor& upstream) {
    check_bn_input(input, state);
    if (!upstream.same_shape(input)) throw ContractError("batch_norm: upstream shape mismatch");
    const std::size_t n = input.extent(0), c = input.extent(1);
    const std::size_t plane = input.extent(2) * input.extent(3);
    const std::size_t m = n * plane;
    const double inv_m = 1.0 / static_cast<double>(m);

    BnGrads g;
    g.input = Tensor(input.shape());
    g.xhat_grad = Tensor(input.shape());
    g.gamma.assign(c, 0.0);
    g.beta.assign(c, 0.0);

    for (std::size_t ch = 0; ch < c; ++ch) {
        const double mu = cache.mean[ch];
        const double var = cache.var[ch];
        const double inv_std = 1.0 / std::sqrt(var + state.eps);
        const double gamma = state.gamma[ch];

        // dL/dxhat_i = dL/dy_i * gamma
        double dvar = 0.0;
        double dxhat_sum = 0.0;
        double diff_sum = 0.0;
        double dgamma = 0.0, dbeta = 0.0;
        const double pow_m32 = -0.5 * inv_std * inv_std * inv_std;  // -1/2 (var+eps)^{-3/2}
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * plane;
            const double* up = upstream.data() + base;
            const double* x = input.data() + base;
            const double* xh = cache.xhat.data() + base;
            double* dxh = g.xhat_grad.data() + base;
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = up[j] * gamma;
                dxh[j] = d;
                dvar += d * (x[j] - mu);
                dxhat_sum += d;
                diff_sum += x[j] - mu;
                dgamma += up[j] * xh[j];
                dbeta += up[j];
            }
        }
        dvar *= pow_m32;
        // dL/dmu: both terms, including the analytically-zero mean-difference sum
        const double dmu = dxhat_sum * (-inv_std) + dvar * (-2.0 * diff_sum) * inv_m;

        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * plane;
            const double* x = input.data() + base;
            const double* dxh = g.xhat_grad.data() + base;
            double* dx = g.input.data() + base;
            for (std::size_t j = 0; j < plane; ++j)
                dx[j] = dxh[j] * inv_std + dvar * 2.0 * (x[j] - mu) * inv_m + dmu * inv_m;
        }
        g.gamma[ch] = dgamma;
        g.beta[ch] = dbeta;
    }
    return g;
}

double softmax_ce_forward(const Tensor& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "softmax_ce logits");
    const std::size_t n = logits.extent(0), classes = logits.extent(1);
    if (labels.size() != n) throw ContractError("softmax_ce: label count does not match batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw ContractError("softmax_ce: label " + std::to_string(labels[i]) +
                                " outside [0," + std::to_string(classes) + ")");
        const double* row = logits.data() + i * classes;
        double mx = row[0];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
        loss += -(row[static_cast<std::size_t>(labels[i])] - mx - std::log(denom));
    }
    return loss / static_cast<double>(n);
}

Tensor softmax_ce_backward(const Tensor& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "softmax_ce logits");
    const std::size_t n = logits.extent(0), classes = logits.extent(1);
    if (labels.size() != n) throw ContractError("softmax_ce: label count does not match batch");
    Tensor grad({n, classes});
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw ContractError("softmax_ce: label " + std::to_string(labels[i]) +
                                " outside [0," + std::to_string(classes) + ")");
        const double* row = logits.data() + i * classes;
        double mx = row[0];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < classes; ++j) {
            const double p = std::exp(row[j] - mx) / denom;
            grad.at(i, j) = (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) * inv_n;
        }
    }
    return grad;
}

Tensor sgd_step(const Tensor& params, const Tensor& grads, double lr) {
    if (!params.same_shape(grads)) throw ContractError("sgd_step: shape mismatch");
    Tensor out(params.shape());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - lr * grads[i];
    return out;
}

std::vector<double> sgd_step(const std::vector<double>& params, const std::vector<double>& grads,
                             double lr) {
    if (params.size() != grads.size()) throw ContractError("sgd_step: shape mismatch");
    std::vector<double> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - lr * grads[i];
    return out;
}

} // namespace fgir
