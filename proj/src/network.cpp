#include "bnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "bnn/bitops.hpp"
#include "bnn/rng.hpp"

namespace bnn {

void NetworkConfig::validate() const {
    if (layer_sizes.size() < 2) {
        throw Error("config: need at least input and output layer sizes");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw Error("config: zero-width layer");
    }
    if (batch_size < 2) throw Error("config: minibatch must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error("config: dropout_rate must be in [0, 1)");
    }
}

Network Network::init(const NetworkConfig& cfg) {
    cfg.validate();
    Network net;
    net.cfg_ = cfg;
    const std::size_t num_layers = cfg.layer_sizes.size() - 1;
    net.layers_.resize(num_layers);
    for (std::size_t k = 0; k < num_layers; ++k) {
        LayerState& layer = net.layers_[k];
        layer.fan_in = cfg.layer_sizes[k];
        layer.fan_out = cfg.layer_sizes[k + 1];
        layer.glorot = glorot_scale(layer.fan_in, layer.fan_out);
        layer.w_real = RealTensor(layer.fan_in, layer.fan_out);
        rng::SplitMix g(rng::mix({cfg.seed, 0x11171, k}));
        for (std::size_t i = 0; i < layer.w_real.size(); ++i) {
            layer.w_real[i] = g.next_uniform(-layer.glorot, layer.glorot);
        }
        layer.bn = BnParams::init(layer.fan_out);
        if (cfg.optimizer == OptimizerKind::Adam) {
            layer.opt_w = OptimizerState::adam(layer.fan_in, layer.fan_out);
            layer.opt_gamma = OptimizerState::adam(1, layer.fan_out);
            layer.opt_beta = OptimizerState::adam(1, layer.fan_out);
        } else {
            layer.opt_w = OptimizerState::shift_adamax(layer.fan_in, layer.fan_out);
            layer.opt_gamma = OptimizerState::shift_adamax(1, layer.fan_out);
            layer.opt_beta = OptimizerState::shift_adamax(1, layer.fan_out);
        }
    }
    return net;
}

void Network::refresh_binary_weights() {
    for (LayerState& layer : layers_) {
        layer.w_binary = sign_binarize(layer.w_real);
        layer.w_packed_t = pack(transpose(layer.w_binary));
        layer.binary_cache_valid = true;
    }
}

namespace {

RealTensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed,
                        std::size_t layer, std::uint64_t step) {
    RealTensor mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        double u = rng::to_unit_double(rng::mix({seed, 0xd09, layer, step, i}));
        mask[i] = u < rate ? 0.0 : keep_scale;
    }
    return mask;
}

RealTensor elementwise_mul(const RealTensor& a, const RealTensor& b) {
    RealTensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

}  // namespace

std::pair<RealTensor, ForwardCache> Network::forward_train(const RealTensor& x,
                                                           std::uint64_t step) {
    if (layers_.empty()) throw UninitializedNetwork("forward_train on empty network");
    if (x.cols() != cfg_.layer_sizes.front()) {
        throw ShapeMismatch("forward_train: input width " + std::to_string(x.cols()) +
                            " vs layer size " + std::to_string(cfg_.layer_sizes.front()));
    }
    refresh_binary_weights();

    const std::size_t L = layers_.size();
    ForwardCache cache;
    cache.layers.resize(L);

    RealTensor act = x;
    bool act_is_binary = false;  // layer-1 inputs are real-valued
    RealTensor output;
    for (std::size_t k = 0; k < L; ++k) {
        LayerState& layer = layers_[k];
        LayerCacheEntry& entry = cache.layers[k];
        entry.input_act = act;
        entry.w_eff = layer.w_binary;

        RealTensor s = act_is_binary
                           ? xnor_gemm(pack(act), layer.w_packed_t, cfg_.threads)
                           : real_gemm(act, layer.w_binary, cfg_.threads);

        auto [y, bn_cache] = cfg_.bn_variant == BnVariant::ShiftBased
                                 ? shift_bn_forward(s, layer.bn, /*training=*/true)
                                 : bn_forward(s, layer.bn, /*training=*/true);
        entry.a = y;
        entry.bn_cache = std::move(bn_cache);

        if (k + 1 == L) {
            output = std::move(y);
        } else {
            RealTensor binarized = cfg_.activation_binarize.is_stochastic()
                                       ? stochastic_binarize(y, cfg_.activation_binarize, k, step)
                                       : sign_binarize(y);
            if (cfg_.dropout_rate > 0.0) {
                entry.dropout_mask =
                    dropout_mask(binarized.rows(), binarized.cols(), cfg_.dropout_rate, cfg_.seed,
                                 k, step);
                act = elementwise_mul(binarized, entry.dropout_mask);
                act_is_binary = false;  // zeros break the packed invariant
            } else {
                act = std::move(binarized);
                act_is_binary = true;
            }
        }
    }
    cache.valid = true;
    return {std::move(output), std::move(cache)};
}

std::vector<LayerGrads> backward_train(Network& net, ForwardCache& cache,
                                       const RealTensor& g_out) {
    if (!cache.valid || cache.layers.size() != net.depth()) {
        throw StaleCache("backward_train: cache does not match the preceding forward");
    }
    const std::size_t L = net.depth();
    if (!g_out.same_shape(cache.layers.back().a)) {
        throw ShapeMismatch("backward_train: output gradient shape");
    }

    std::vector<LayerGrads> grads(L);
    RealTensor g = g_out;  // gradient w.r.t. the binarized output of layer k (or scores at L-1)
    for (std::size_t k = L; k-- > 0;) {
        LayerCacheEntry& entry = cache.layers[k];
        RealTensor g_a;
        if (k + 1 == L) {
            g_a = std::move(g);
        } else {
            if (!entry.dropout_mask.empty()) {
                g = elementwise_mul(g, entry.dropout_mask);
            }
            g_a = ste_backward(g, entry.a);
        }

        BnGrads bn_grads = bn_backward(g_a, entry.bn_cache, net.layers()[k].bn);
        grads[k].g_gamma = std::move(bn_grads.g_gamma);
        grads[k].g_beta = std::move(bn_grads.g_beta);
        grads[k].g_w =
            real_gemm(transpose(entry.input_act), bn_grads.g_x, net.config().threads);
        if (k > 0) {
            g = real_gemm(bn_grads.g_x, transpose(entry.w_eff), net.config().threads);
        }
    }
    cache.layers.clear();
    cache.valid = false;
    return grads;
}

std::pair<double, RealTensor> hinge_loss(const RealTensor& scores, std::span<const int> labels) {
    const std::size_t batch = scores.rows();
    const std::size_t classes = scores.cols();
    if (labels.size() != batch) {
        throw ShapeMismatch("hinge_loss: " + std::to_string(labels.size()) + " labels for batch " +
                            std::to_string(batch));
    }
    RealTensor g(batch, classes);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch * classes);
    for (std::size_t i = 0; i < batch; ++i) {
        int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw LabelOutOfRange("hinge_loss: label " + std::to_string(label) + " for " +
                                  std::to_string(classes) + " classes");
        }
        for (std::size_t c = 0; c < classes; ++c) {
            const double y = (static_cast<int>(c) == label) ? 1.0 : -1.0;
            const double margin = std::max(0.0, 1.0 - y * scores(i, c));
            loss += margin * margin * scale;
            g(i, c) = -2.0 * y * margin * scale;
        }
    }
    return {loss, std::move(g)};
}

RealTensor Network::evaluate_scores(const RealTensor& x_scaled) const {
    if (layers_.empty()) throw UninitializedNetwork("evaluate on empty network");
    const std::size_t L = layers_.size();
    BitMatrix act_packed;
    bool packed = false;
    RealTensor scores;

    for (std::size_t k = 0; k < L; ++k) {
        const LayerState& layer = layers_[k];
        RealTensor w_b = sign_binarize(layer.w_real);
        RealTensor s = packed ? xnor_gemm(act_packed, pack(transpose(w_b)), cfg_.threads)
                              : real_gemm(x_scaled, w_b, cfg_.threads);

        auto factors = bn_inference_factors(layer.bn, cfg_.bn_variant);
        if (k + 1 == L) {
            scores = RealTensor(s.rows(), s.cols());
            for (std::size_t i = 0; i < s.rows(); ++i) {
                for (std::size_t j = 0; j < s.cols(); ++j) {
                    scores(i, j) = bn_affine(s(i, j), factors.gamma_eff[j], layer.bn.beta[j],
                                             layer.bn.running_mean[j], factors.istd_eff[j]);
                }
            }
        } else {
            act_packed = BitMatrix(s.rows(), s.cols());
            for (std::size_t i = 0; i < s.rows(); ++i) {
                for (std::size_t j = 0; j < s.cols(); ++j) {
                    double y = bn_affine(s(i, j), factors.gamma_eff[j], layer.bn.beta[j],
                                         layer.bn.running_mean[j], factors.istd_eff[j]);
                    if (y >= 0.0) act_packed.set_bit(i, j, true);
                }
            }
            packed = true;
        }
    }
    return scores;
}

int argmax_row(const RealTensor& scores, std::size_t row) {
    int best = 0;
    double best_score = scores(row, 0);
    for (std::size_t c = 1; c < scores.cols(); ++c) {
        if (scores(row, c) > best_score) {
            best_score = scores(row, c);
            best = static_cast<int>(c);
        }
    }
    return best;
}

std::vector<int> Network::predict(const Dataset& data, std::size_t chunk) const {
    std::vector<int> out;
    out.reserve(data.n);
    std::vector<std::size_t> indices(chunk);
    for (std::size_t begin = 0; begin < data.n; begin += chunk) {
        const std::size_t end = std::min(begin + chunk, data.n);
        indices.resize(end - begin);
        std::iota(indices.begin(), indices.end(), begin);
        RealTensor scores = evaluate_scores(data.scaled_batch(indices));
        for (std::size_t i = 0; i < scores.rows(); ++i) out.push_back(argmax_row(scores, i));
    }
    return out;
}

double Network::error_rate(const Dataset& data) const {
    if (data.n == 0) return std::numeric_limits<double>::quiet_NaN();
    auto preds = predict(data);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.n; ++i) {
        if (preds[i] != data.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.n);
}

namespace {

void apply_update(LayerState& layer, const LayerGrads& grads, OptimizerKind kind, double lr) {
    const bool shift = kind == OptimizerKind::ShiftAdaMax;
    const double w_lr = layer.glorot * lr;
    layer.opt_w.alpha = shift ? ap2(w_lr) : w_lr;
    layer.opt_gamma.alpha = shift ? ap2(lr) : lr;
    layer.opt_beta.alpha = layer.opt_gamma.alpha;

    if (shift) {
        shift_adamax_update(layer.w_real, grads.g_w, layer.opt_w);
        shift_adamax_update(layer.bn.gamma, grads.g_gamma, layer.opt_gamma);
        shift_adamax_update(layer.bn.beta, grads.g_beta, layer.opt_beta);
    } else {
        adam_update(layer.w_real, grads.g_w, layer.opt_w);
        adam_update(layer.bn.gamma, grads.g_gamma, layer.opt_gamma);
        adam_update(layer.bn.beta, grads.g_beta, layer.opt_beta);
    }
    clip_weights_inplace(layer.w_real);
    layer.binary_cache_valid = false;
}

}  // namespace

TrainResult train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  const Dataset* test_set, const EpochCallback& on_epoch) {
    const NetworkConfig& cfg = net.config();
    if (train_set.dim != cfg.layer_sizes.front()) {
        throw ShapeMismatch("train: dataset dim " + std::to_string(train_set.dim) +
                            " vs input layer " + std::to_string(cfg.layer_sizes.front()));
    }

    TrainResult result;
    std::vector<LayerState> best_layers = net.layers();
    std::uint64_t global_step = 0;

    std::vector<std::size_t> order(train_set.n);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = schedule_lr(cfg.eta0, cfg.lr_schedule, epoch);

        std::iota(order.begin(), order.end(), std::size_t{0});
        rng::SplitMix shuffler(rng::mix({cfg.seed, 0x5481f, epoch}));
        rng::shuffle(order, shuffler);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin + 2 <= train_set.n; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, train_set.n);
            if (end - begin < 2) break;  // batch statistics need m >= 2
            std::span<const std::size_t> idx(order.data() + begin, end - begin);
            RealTensor x = train_set.scaled_batch(idx);
            std::vector<int> labels = train_set.label_batch(idx);

            auto [scores, cache] = net.forward_train(x, global_step);
            auto [loss, g] = hinge_loss(scores, labels);
            auto grads = backward_train(net, cache, g);
            for (std::size_t k = 0; k < net.depth(); ++k) {
                apply_update(net.layers()[k], grads[k], cfg.optimizer, lr);
            }
            loss_sum += loss;
            ++batches;
            ++global_step;
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.lr = lr;
        metrics.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        metrics.val_error = net.error_rate(val_set);
        result.epochs.push_back(metrics);
        if (on_epoch) on_epoch(metrics);

        if (metrics.val_error < result.best_val_error) {
            result.best_val_error = metrics.val_error;
            result.best_epoch = epoch;
            best_layers = net.layers();
        }
    }

    net.layers() = std::move(best_layers);
    result.test_error =
        test_set ? net.error_rate(*test_set) : std::numeric_limits<double>::quiet_NaN();
    return result;
}

InferenceModel export_inference(const Network& net) {
    if (net.depth() == 0) throw UntrainedNetwork("export_inference on empty network");
    const std::size_t L = net.depth();
    InferenceModel model;
    model.bn_variant = net.config().bn_variant;
    model.layers.resize(L);

    for (std::size_t k = 0; k < L; ++k) {
        const LayerState& layer = net.layers()[k];
        InferenceLayer& out = model.layers[k];
        out.fan_in = layer.fan_in;
        out.fan_out = layer.fan_out;
        RealTensor w_b = sign_binarize(layer.w_real);
        out.w_t = pack(transpose(w_b));
        out.bn = layer.bn;
        auto factors = bn_inference_factors(layer.bn, model.bn_variant);
        out.gamma_eff = std::move(factors.gamma_eff);
        out.istd_eff = std::move(factors.istd_eff);

        if (k == 0) {
            out.weight_colsum = RealTensor(1, layer.fan_out);
            for (std::size_t j = 0; j < layer.fan_out; ++j) {
                double c = 0.0;
                for (std::size_t i = 0; i < layer.fan_in; ++i) c += w_b(i, j);
                out.weight_colsum[j] = c;
            }
        }

        if (k + 1 == L) {
            out.kind = InferenceLayer::Kind::OutputAffine;
            continue;
        }
        bool foldable = true;
        for (std::size_t j = 0; j < layer.fan_out; ++j) {
            if (out.gamma_eff[j] * out.istd_eff[j] == 0.0) {
                foldable = false;  // ZeroGamma: keep explicit BN then sign
                break;
            }
        }
        if (!foldable) {
            out.kind = InferenceLayer::Kind::HiddenExplicitBn;
            continue;
        }
        out.kind = InferenceLayer::Kind::HiddenThreshold;
        out.tau = RealTensor(1, layer.fan_out);
        out.flip.resize(layer.fan_out);
        for (std::size_t j = 0; j < layer.fan_out; ++j) {
            const double a = out.gamma_eff[j] * out.istd_eff[j];
            out.tau[j] = layer.bn.running_mean[j] - layer.bn.beta[j] / a;
            out.flip[j] = a < 0.0 ? 1 : 0;
        }
    }
    return model;
}

namespace {

// sign(BatchNorm(s)) decision for a folded hidden layer.
inline bool threshold_fire(double s, double tau, bool flip) {
    return flip ? (s <= tau) : (s >= tau);
}

}  // namespace

RealTensor infer(const InferenceModel& model, const RealTensor& x_raw, int threads) {
    if (model.layers.empty()) throw CorruptModel("infer: model has no layers");
    if (x_raw.cols() != model.layers.front().fan_in) {
        throw ShapeMismatch("infer: input width " + std::to_string(x_raw.cols()) + " vs model " +
                            std::to_string(model.layers.front().fan_in));
    }

    const std::size_t batch = x_raw.rows();
    BitMatrix act;
    RealTensor scores;
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const InferenceLayer& layer = model.layers[k];
        RealTensor s;
        if (k == 0) {
            // Exact integer product on 8-bit inputs, then the same dyadic
            // rescaling the training path applies to pixels:
            //   s_scaled = (2*s_raw - 255*colsum) / 256, exact in doubles.
            s = fixed_point_first_layer(x_raw, layer.w_t, threads);
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t j = 0; j < layer.fan_out; ++j) {
                    s(i, j) = (2.0 * s(i, j) - 255.0 * layer.weight_colsum[j]) / 256.0;
                }
            }
        } else {
            s = xnor_gemm(act, layer.w_t, threads);
        }

        switch (layer.kind) {
            case InferenceLayer::Kind::HiddenThreshold: {
                act = BitMatrix(batch, layer.fan_out);
                for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < layer.fan_out; ++j) {
                        if (threshold_fire(s(i, j), layer.tau[j], layer.flip[j] != 0)) {
                            act.set_bit(i, j, true);
                        }
                    }
                }
                break;
            }
            case InferenceLayer::Kind::HiddenExplicitBn: {
                act = BitMatrix(batch, layer.fan_out);
                for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < layer.fan_out; ++j) {
                        double y = bn_affine(s(i, j), layer.gamma_eff[j], layer.bn.beta[j],
                                             layer.bn.running_mean[j], layer.istd_eff[j]);
                        if (y >= 0.0) act.set_bit(i, j, true);
                    }
                }
                break;
            }
            case InferenceLayer::Kind::OutputAffine: {
                scores = RealTensor(batch, layer.fan_out);
                for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < layer.fan_out; ++j) {
                        scores(i, j) = bn_affine(s(i, j), layer.gamma_eff[j], layer.bn.beta[j],
                                                 layer.bn.running_mean[j], layer.istd_eff[j]);
                    }
                }
                break;
            }
        }
    }
    return scores;
}

std::vector<int> infer_predict(const InferenceModel& model, const Dataset& data, std::size_t chunk,
                               int threads) {
    std::vector<int> out;
    out.reserve(data.n);
    std::vector<std::size_t> indices;
    for (std::size_t begin = 0; begin < data.n; begin += chunk) {
        const std::size_t end = std::min(begin + chunk, data.n);
        indices.resize(end - begin);
        std::iota(indices.begin(), indices.end(), begin);
        RealTensor scores = infer(model, data.raw_batch(indices), threads);
        for (std::size_t i = 0; i < scores.rows(); ++i) out.push_back(argmax_row(scores, i));
    }
    return out;
}

namespace {

constexpr char kModelMagic[4] = {'B', 'N', 'N', 'M'};
constexpr std::uint16_t kModelVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw TruncatedFile("model stream short");
    return v;
}

}  // namespace

void save_model(const std::filesystem::path& path, const InferenceModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kModelMagic, 4);
    put(os, kModelVersion);
    put(os, static_cast<std::uint8_t>(model.bn_variant));
    put(os, std::uint8_t{0});
    put(os, static_cast<std::uint64_t>(model.layers.size()));
    for (const InferenceLayer& layer : model.layers) {
        put(os, static_cast<std::uint64_t>(layer.fan_in));
        put(os, static_cast<std::uint64_t>(layer.fan_out));
        put(os, static_cast<std::uint8_t>(layer.kind));
        write_bitmatrix(os, layer.w_t);
        put(os, layer.bn.epsilon);
        put(os, layer.bn.momentum);
        write_tensor(os, layer.bn.gamma);
        write_tensor(os, layer.bn.beta);
        write_tensor(os, layer.bn.running_mean);
        write_tensor(os, layer.bn.running_var);
        write_tensor(os, layer.gamma_eff);
        write_tensor(os, layer.istd_eff);
        write_tensor(os, layer.tau);
        put(os, static_cast<std::uint64_t>(layer.flip.size()));
        os.write(reinterpret_cast<const char*>(layer.flip.data()),
                 static_cast<std::streamsize>(layer.flip.size()));
        write_tensor(os, layer.weight_colsum);
    }
    if (!os) throw IoError("short write: " + path.string());
}

InferenceModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    try {
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, kModelMagic, 4) != 0) {
            throw CorruptModel("not a BNNM file: " + path.string());
        }
        if (get<std::uint16_t>(is) != kModelVersion) {
            throw CorruptModel("unsupported model version in " + path.string());
        }
        InferenceModel model;
        model.bn_variant = static_cast<BnVariant>(get<std::uint8_t>(is));
        (void)get<std::uint8_t>(is);
        const auto count = get<std::uint64_t>(is);
        model.layers.resize(count);
        for (auto& layer : model.layers) {
            layer.fan_in = get<std::uint64_t>(is);
            layer.fan_out = get<std::uint64_t>(is);
            layer.kind = static_cast<InferenceLayer::Kind>(get<std::uint8_t>(is));
            layer.w_t = read_bitmatrix(is);
            layer.bn.epsilon = get<double>(is);
            layer.bn.momentum = get<double>(is);
            layer.bn.gamma = read_tensor(is);
            layer.bn.beta = read_tensor(is);
            layer.bn.running_mean = read_tensor(is);
            layer.bn.running_var = read_tensor(is);
            layer.gamma_eff = read_tensor(is);
            layer.istd_eff = read_tensor(is);
            layer.tau = read_tensor(is);
            const auto flips = get<std::uint64_t>(is);
            layer.flip.resize(flips);
            is.read(reinterpret_cast<char*>(layer.flip.data()),
                    static_cast<std::streamsize>(flips));
            if (!is) throw TruncatedFile("model stream short");
            layer.weight_colsum = read_tensor(is);
            if (layer.w_t.rows() != layer.fan_out || layer.w_t.cols() != layer.fan_in ||
                layer.bn.gamma.cols() != layer.fan_out) {
                throw CorruptModel("inconsistent layer dims in " + path.string());
            }
        }
        return model;
    } catch (const CorruptModel&) {
        throw;
    } catch (const Error& e) {
        throw CorruptModel("while reading " + path.string() + ": " + e.what());
    }
}

}  // namespace bnn
