#include "fgir/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fgir/binio.hpp"
#include "fgir/errors.hpp"
#include "fgir/rng.hpp"

namespace fgir {

namespace {

void validate_config(const NetworkConfig& c) {
    if (c.trunk.empty()) throw ConfigError("network config: trunk must have at least one block");
    if (c.shared_depth > c.trunk.size())
        throw ConfigError("network config: shared_depth exceeds trunk length");
    if (c.num_species < 1) throw ConfigError("network config: num_species must be >= 1");
    if (c.feature_channels != c.trunk.back())
        throw ConfigError("network config: feature_channels must equal the last trunk width");
    const std::size_t div = std::size_t{1} << c.trunk.size();
    if (c.input_size == 0 || c.input_size % div != 0)
        throw ConfigError("network config: input_size " + std::to_string(c.input_size) +
                          " not divisible by 2^" + std::to_string(c.trunk.size()));
}

ConvBlock init_block(std::size_t c_in, std::size_t c_out, std::size_t k, Rng& rng) {
    ConvBlock block;
    block.weights = Tensor({c_out, c_in, k, k});
    const double fan_in = static_cast<double>(c_in * k * k);
    const double fan_out = static_cast<double>(c_out * k * k);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < block.weights.size(); ++i)
        block.weights[i] = rng.uniform(-bound, bound);
    block.bias.assign(c_out, 0.0);
    return block;
}

// conv3x3 -> relu -> maxpool2 activations kept for the backward pass.
struct BlockCache {
    Tensor conv_out;
    Tensor relu_out;
    Tensor pool_out;
};

Tensor run_blocks(const std::vector<ConvBlock>& blocks, const Tensor& input,
                  std::vector<BlockCache>* caches) {
    Tensor x = input;
    for (const ConvBlock& b : blocks) {
        BlockCache cache;
        cache.conv_out = conv2d_forward(x, b.weights, b.bias);
        cache.relu_out = relu_forward(cache.conv_out);
        cache.pool_out = maxpool2_forward(cache.relu_out);
        x = cache.pool_out;
        if (caches) caches->push_back(std::move(cache));
    }
    return x;
}

struct BlockGrads {
    Tensor weights;
    std::vector<double> bias;
};

// Backward through a block stack; returns the gradient w.r.t. the stack input
// and appends per-block parameter gradients (in block order) to `grads`.
Tensor blocks_backward(const std::vector<ConvBlock>& blocks, const Tensor& input,
                       const std::vector<BlockCache>& caches, Tensor upstream,
                       std::vector<BlockGrads>& grads) {
    grads.resize(blocks.size());
    for (std::size_t bi = blocks.size(); bi-- > 0;) {
        const Tensor& block_input = bi == 0 ? input : caches[bi - 1].pool_out;
        Tensor d_relu = maxpool2_backward(caches[bi].relu_out, upstream);
        Tensor d_conv = relu_backward(caches[bi].conv_out, d_relu);
        Conv2dGrads cg = conv2d_backward(block_input, blocks[bi].weights, d_conv);
        grads[bi].weights = std::move(cg.weights);
        grads[bi].bias = std::move(cg.bias);
        upstream = std::move(cg.input);
    }
    return upstream;
}

void apply_block_grads(std::vector<ConvBlock>& blocks, const std::vector<BlockGrads>& grads,
                       double lr) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].weights = sgd_step(blocks[i].weights, grads[i].weights, lr);
        blocks[i].bias = sgd_step(blocks[i].bias, grads[i].bias, lr);
    }
}

Tensor as_batch(const Tensor& image, std::size_t input_size) {
    if (image.rank() == 2) {
        if (image.extent(0) != input_size || image.extent(1) != input_size)
            throw ContractError("image size " + Tensor::shape_str(image.shape()) +
                                " does not match network input " + std::to_string(input_size));
        return Tensor({1, 1, input_size, input_size}, image.values());
    }
    if (image.rank() == 3) {
        if (image.extent(0) != 1 || image.extent(1) != input_size || image.extent(2) != input_size)
            throw ContractError("image shape " + Tensor::shape_str(image.shape()) +
                                " does not match network input " + std::to_string(input_size));
        return Tensor({1, 1, input_size, input_size}, image.values());
    }
    throw ContractError("image must be rank 2 or 3, got " + Tensor::shape_str(image.shape()));
}

} // namespace

std::size_t CnNetsModel::param_count() const {
    std::size_t n = 0;
    auto count_block = [&n](const ConvBlock& b) { n += b.weights.size() + b.bias.size(); };
    for (const auto& b : shared) count_block(b);
    for (const auto& b : conv_branch.tail) count_block(b);
    n += conv_branch.head_weights.size() + conv_branch.head_bias.size();
    for (const auto& b : norm_branch.tail) count_block(b);
    n += norm_branch.head_weights.size() + norm_branch.head_bias.size();
    n += bn.gamma.size() + bn.beta.size();
    return n;
}

CnNetsModel build_model(const NetworkConfig& config) {
    validate_config(config);
    Rng rng(config.seed);
    CnNetsModel model;
    model.config = config;

    const std::size_t s = config.shared_depth;
    std::size_t c_in = 1;
    for (std::size_t i = 0; i < s; ++i) {
        model.shared.push_back(init_block(c_in, config.trunk[i], 3, rng));
        c_in = config.trunk[i];
    }
    const std::size_t tail_in = c_in;
    auto build_branch = [&](BranchParams& branch) {
        std::size_t ch = tail_in;
        for (std::size_t i = s; i < config.trunk.size(); ++i) {
            branch.tail.push_back(init_block(ch, config.trunk[i], 3, rng));
            ch = config.trunk[i];
        }
        ConvBlock head = init_block(ch, config.num_species, 1, rng);
        branch.head_weights = std::move(head.weights);
        branch.head_bias = std::move(head.bias);
    };
    build_branch(model.conv_branch);
    build_branch(model.norm_branch);
    model.bn = BnState::make(config.num_species);
    return model;
}

namespace {

struct ForwardCache {
    Tensor input;
    std::vector<BlockCache> shared;
    std::vector<BlockCache> conv_tail, norm_tail;
    Tensor conv_pre_head, norm_pre_head;  // trunk outputs feeding the heads
    Tensor conv_maps;                     // conv head output
    Tensor norm_head_out;                 // norm head output, before BN
    Tensor norm_maps;                     // after BN
    BnCache bn;
};

// Shared forward; `phase` picks batch vs running statistics for BN, and
// `update_bn` (train steps only) lets the running averages advance.
ClassifyOutput forward_impl(const CnNetsModel& model, const Tensor& batch, Phase phase,
                            BnState* mutable_bn, ForwardCache* cache) {
    require_rank(batch, 4, "forward batch");
    if (batch.extent(1) != 1 || batch.extent(2) != model.config.input_size ||
        batch.extent(3) != model.config.input_size)
        throw ContractError("forward batch shape " + Tensor::shape_str(batch.shape()) +
                            " does not match network input " +
                            std::to_string(model.config.input_size));

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.input = batch;

    Tensor trunk_out = run_blocks(model.shared, batch, cache ? &fc.shared : nullptr);
    fc.conv_pre_head = run_blocks(model.conv_branch.tail, trunk_out, cache ? &fc.conv_tail : nullptr);
    fc.norm_pre_head = run_blocks(model.norm_branch.tail, trunk_out, cache ? &fc.norm_tail : nullptr);

    fc.conv_maps =
        conv2d_forward(fc.conv_pre_head, model.conv_branch.head_weights, model.conv_branch.head_bias);
    fc.norm_head_out =
        conv2d_forward(fc.norm_pre_head, model.norm_branch.head_weights, model.norm_branch.head_bias);

    if (phase == Phase::train) {
        if (mutable_bn) {
            fc.norm_maps = batch_norm_train(fc.norm_head_out, *mutable_bn, fc.bn);
        } else {
            BnState scratch = model.bn;  // batch statistics without advancing the running averages
            fc.norm_maps = batch_norm_train(fc.norm_head_out, scratch, fc.bn);
        }
    } else {
        fc.norm_maps = batch_norm_infer(fc.norm_head_out, model.bn);
    }

    ClassifyOutput out;
    out.conv_maps = fc.conv_maps;
    out.norm_maps = fc.norm_maps;
    out.conv_scores = gap_forward(fc.conv_maps);
    out.norm_scores = gap_forward(fc.norm_maps);
    out.combined = Tensor(out.conv_scores.shape());
    for (std::size_t i = 0; i < out.combined.size(); ++i)
        out.combined[i] = 0.5 * (out.conv_scores[i] + out.norm_scores[i]);
    return out;
}

} // namespace

ClassifyOutput forward_classify(const CnNetsModel& model, const Tensor& batch, Phase phase) {
    return forward_impl(model, batch, phase, nullptr, nullptr);
}

double train_step(CnNetsModel& model, const Tensor& batch, const std::vector<int>& labels,
                  double lr, BranchSelect select, TrainDiagnostics* diag) {
    ForwardCache fc;
    ClassifyOutput out = forward_impl(model, batch, Phase::train, &model.bn, &fc);

    const bool use_conv = select != BranchSelect::norm_only;
    const bool use_norm = select != BranchSelect::conv_only;

    double loss = 0.0;
    if (use_conv) loss += softmax_ce_forward(out.conv_scores, labels);
    if (use_norm) loss += softmax_ce_forward(out.norm_scores, labels);

    Tensor shared_grad;
    std::vector<BlockGrads> shared_grads, conv_tail_grads, norm_tail_grads;
    Conv2dGrads conv_head_grads, norm_head_grads;
    BnGrads bn_grads;

    const Tensor& trunk_out = model.shared.empty() ? fc.input : fc.shared.back().pool_out;

    if (use_conv) {
        Tensor d_scores = softmax_ce_backward(out.conv_scores, labels);
        Tensor d_maps = gap_backward(fc.conv_maps.shape(), d_scores);
        if (diag) diag->conv_map_grad = d_maps;
        conv_head_grads = conv2d_backward(fc.conv_pre_head, model.conv_branch.head_weights, d_maps);
        Tensor d_trunk = blocks_backward(model.conv_branch.tail, trunk_out, fc.conv_tail,
                                         std::move(conv_head_grads.input), conv_tail_grads);
        shared_grad = std::move(d_trunk);
    }
    if (use_norm) {
        Tensor d_scores = softmax_ce_backward(out.norm_scores, labels);
        Tensor d_maps = gap_backward(fc.norm_maps.shape(), d_scores);
        if (diag) diag->norm_map_grad = d_maps;
        bn_grads = batch_norm_backward(fc.norm_head_out, model.bn, fc.bn, d_maps);
        if (diag) diag->xhat_grad = bn_grads.xhat_grad;
        norm_head_grads =
            conv2d_backward(fc.norm_pre_head, model.norm_branch.head_weights, bn_grads.input);
        Tensor d_trunk = blocks_backward(model.norm_branch.tail, trunk_out, fc.norm_tail,
                                         std::move(norm_head_grads.input), norm_tail_grads);
        if (shared_grad.size() == 0) {
            shared_grad = std::move(d_trunk);
        } else {
            for (std::size_t i = 0; i < shared_grad.size(); ++i) shared_grad[i] += d_trunk[i];
        }
    }
    if (!model.shared.empty() && shared_grad.size() != 0)
        blocks_backward(model.shared, fc.input, fc.shared, std::move(shared_grad), shared_grads);

    // All gradients are complete; apply the step.
    if (!shared_grads.empty()) apply_block_grads(model.shared, shared_grads, lr);
    if (use_conv) {
        apply_block_grads(model.conv_branch.tail, conv_tail_grads, lr);
        model.conv_branch.head_weights =
            sgd_step(model.conv_branch.head_weights, conv_head_grads.weights, lr);
        model.conv_branch.head_bias = sgd_step(model.conv_branch.head_bias, conv_head_grads.bias, lr);
    }
    if (use_norm) {
        apply_block_grads(model.norm_branch.tail, norm_tail_grads, lr);
        model.norm_branch.head_weights =
            sgd_step(model.norm_branch.head_weights, norm_head_grads.weights, lr);
        model.norm_branch.head_bias = sgd_step(model.norm_branch.head_bias, norm_head_grads.bias, lr);
        model.bn.gamma = sgd_step(model.bn.gamma, bn_grads.gamma, lr);
        model.bn.beta = sgd_step(model.bn.beta, bn_grads.beta, lr);
    }
    return loss;
}

std::vector<double> train(CnNetsModel& model, const std::vector<Tensor>& images,
                          const std::vector<int>& labels, const TrainConfig& tc) {
    if (images.empty()) throw DataError("train: empty training set");
    if (images.size() != labels.size()) throw ContractError("train: label count mismatch");
    if (tc.epochs < 1 || tc.batch_size < 1 || tc.learning_rate <= 0.0)
        throw ConfigError("train: epochs, batch_size, learning_rate must be positive");
    const std::size_t c = model.config.num_species;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw DataError("train: record " + std::to_string(i) + " has species label " +
                            std::to_string(labels[i]) + " outside [0," + std::to_string(c) + ")");

    const std::size_t in = model.config.input_size;
    Rng shuffle_rng(tc.seed);
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> trace;
    trace.reserve(tc.epochs);
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t count = std::min(tc.batch_size, order.size() - start);
            Tensor batch({count, 1, in, in});
            std::vector<int> batch_labels(count);
            for (std::size_t b = 0; b < count; ++b) {
                const Tensor& img = images[order[start + b]];
                const Tensor framed = as_batch(img, in);
                std::copy(framed.data(), framed.data() + framed.size(),
                          batch.data() + b * in * in);
                batch_labels[b] = labels[order[start + b]];
            }
            epoch_loss += train_step(model, batch, batch_labels, tc.learning_rate);
            ++batches;
        }
        trace.push_back(epoch_loss / static_cast<double>(batches));
    }
    return trace;
}

namespace {

// Trunk-only forward for feature extraction; heads are applied by callers
// that need maps.
Tensor branch_pre_head(const CnNetsModel& model, const Tensor& batch, bool conv) {
    Tensor trunk_out = run_blocks(model.shared, batch, nullptr);
    const BranchParams& branch = conv ? model.conv_branch : model.norm_branch;
    return run_blocks(branch.tail, trunk_out, nullptr);
}

std::vector<double> gap_vector(const Tensor& activ) {
    Tensor pooled = gap_forward(activ);  // [1, N]
    return pooled.values();
}

} // namespace

ConvFeature extract_conv_feature(const CnNetsModel& model, const Tensor& image) {
    const Tensor batch = as_batch(image, model.config.input_size);
    Tensor pre_head = branch_pre_head(model, batch, true);
    ConvFeature out;
    out.feature = gap_vector(pre_head);
    Tensor maps = conv2d_forward(pre_head, model.conv_branch.head_weights, model.conv_branch.head_bias);
    const std::size_t c = maps.extent(1), m = maps.extent(2);
    out.maps = Tensor({c, m, m}, maps.values());
    return out;
}

std::vector<double> extract_cn_feature(const CnNetsModel& model, const Tensor& image) {
    const Tensor batch = as_batch(image, model.config.input_size);
    std::vector<double> f_conv = gap_vector(branch_pre_head(model, batch, true));
    std::vector<double> f_norm = gap_vector(branch_pre_head(model, batch, false));
    f_conv.insert(f_conv.end(), f_norm.begin(), f_norm.end());
    return f_conv;
}

std::pair<std::size_t, Tensor> select_confidence_map(const Tensor& maps) {
    require_rank(maps, 3, "select_confidence_map maps");
    const std::size_t c = maps.extent(0);
    const std::size_t plane = maps.extent(1) * maps.extent(2);
    if (c < 1) throw ContractError("select_confidence_map: need at least one map");
    std::size_t best = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = maps.data() + ch * plane;
        double acc = 0.0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        const double mean = acc / static_cast<double>(plane);
        if (mean > best_mean) {
            best_mean = mean;
            best = ch;
        }
    }
    Tensor map({maps.extent(1), maps.extent(2)});
    std::copy(maps.data() + best * plane, maps.data() + (best + 1) * plane, map.data());
    return {best, map};
}

namespace {

constexpr char kModelMagic[4] = {'C', 'N', 'N', 'T'};
constexpr std::uint32_t kModelVersion = 1;

void write_tensor(BinWriter& w, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f64_array(t.data(), t.size());
}

Tensor read_tensor(BinReader& r) {
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("model file: implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = r.u32();
    Tensor t(shape);
    r.f64_array(t.data(), t.size());
    return t;
}

void write_vec(BinWriter& w, const std::vector<double>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.f64_array(v.data(), v.size());
}

std::vector<double> read_vec(BinReader& r) {
    std::vector<double> v(r.u32());
    r.f64_array(v.data(), v.size());
    return v;
}

} // namespace

void save_model(const CnNetsModel& model, const std::filesystem::path& path) {
    BinWriter w(path);
    w.magic(kModelMagic);
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(model.config.input_size));
    w.u32(static_cast<std::uint32_t>(model.config.trunk.size()));
    for (std::size_t t : model.config.trunk) w.u32(static_cast<std::uint32_t>(t));
    w.u32(static_cast<std::uint32_t>(model.config.shared_depth));
    w.u32(static_cast<std::uint32_t>(model.config.feature_channels));
    w.u32(static_cast<std::uint32_t>(model.config.num_species));
    w.u64(model.config.seed);
    w.f64(model.bn.eps);
    w.f64(model.bn.momentum);
    w.u64(model.bn.batches_seen);

    auto write_block = [&w](const ConvBlock& b) {
        write_tensor(w, b.weights);
        write_vec(w, b.bias);
    };
    auto write_branch = [&](const BranchParams& br) {
        w.u32(static_cast<std::uint32_t>(br.tail.size()));
        for (const auto& b : br.tail) write_block(b);
        write_tensor(w, br.head_weights);
        write_vec(w, br.head_bias);
    };
    w.u32(static_cast<std::uint32_t>(model.shared.size()));
    for (const auto& b : model.shared) write_block(b);
    write_branch(model.conv_branch);
    write_branch(model.norm_branch);
    write_vec(w, model.bn.gamma);
    write_vec(w, model.bn.beta);
    write_vec(w, model.bn.running_mean);
    write_vec(w, model.bn.running_var);
    w.close();
}

CnNetsModel load_model(const std::filesystem::path& path) {
    BinReader r(path);
    r.expect_magic(kModelMagic);
    const std::uint32_t version = r.u32();
    if (version != kModelVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));

    CnNetsModel model;
    model.config.input_size = r.u32();
    model.config.trunk.resize(r.u32());
    for (auto& t : model.config.trunk) t = r.u32();
    model.config.shared_depth = r.u32();
    model.config.feature_channels = r.u32();
    model.config.num_species = r.u32();
    model.config.seed = r.u64();
    model.bn.eps = r.f64();
    model.bn.momentum = r.f64();
    model.bn.batches_seen = r.u64();

    auto read_block = [&r]() {
        ConvBlock b;
        b.weights = read_tensor(r);
        b.bias = read_vec(r);
        return b;
    };
    auto read_branch = [&]() {
        BranchParams br;
        br.tail.resize(r.u32());
        for (auto& b : br.tail) b = read_block();
        br.head_weights = read_tensor(r);
        br.head_bias = read_vec(r);
        return br;
    };
    model.shared.resize(r.u32());
    for (auto& b : model.shared) b = read_block();
    model.conv_branch = read_branch();
    model.norm_branch = read_branch();
    model.bn.gamma = read_vec(r);
    model.bn.beta = read_vec(r);
    model.bn.running_mean = read_vec(r);
    model.bn.running_var = read_vec(r);
    r.expect_eof();
    return model;
}

} // namespace fgir
