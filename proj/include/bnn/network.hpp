#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bnn/binarize.hpp"
#include "bnn/data.hpp"
#include "bnn/normalization.hpp"
#include "bnn/optimizers.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

enum class OptimizerKind { Adam, ShiftAdaMax };

struct NetworkConfig {
    std::vector<std::size_t> layer_sizes;  // e.g. {784, 512, 512, 10}
    BinarizeMode activation_binarize = BinarizeMode::deterministic();
    BnVariant bn_variant = BnVariant::Vanilla;
    OptimizerKind optimizer = OptimizerKind::Adam;
    LrSchedule lr_schedule{};
    double eta0 = 3e-3;
    std::size_t batch_size = 100;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    double dropout_rate = 0.0;  // off by default and outside the packed path
    int threads = 0;

    void validate() const;  // >= 2 layer sizes, batch >= 2
};

// Per-layer training state. w_real stays in [-1,1]; the binarized copies are
// refreshed at the start of every forward pass.
struct LayerState {
    std::size_t fan_in = 0, fan_out = 0;
    RealTensor w_real;    // fan_in x fan_out
    RealTensor w_binary;  // sign(w_real), refreshed each forward
    BitMatrix w_packed_t;  // pack(transpose(w_binary)), fan_out x fan_in
    bool binary_cache_valid = false;
    BnParams bn;
    double glorot = 0.0;
    OptimizerState opt_w, opt_gamma, opt_beta;
};

// Values captured by forward_train for the matching backward pass. w_eff is
// the weight tensor actually multiplied (the binarized weights on the
// training path; tests may fill a differentiable surrogate instead).
struct LayerCacheEntry {
    RealTensor input_act;  // batch x fan_in
    RealTensor w_eff;      // fan_in x fan_out
    RealTensor a;          // post-BN activations (pre-binarization)
    BnCache bn_cache;
    RealTensor dropout_mask;  // empty unless dropout was applied to the output
};

struct ForwardCache {
    std::vector<LayerCacheEntry> layers;
    bool valid = false;
};

struct LayerGrads {
    RealTensor g_w;      // fan_in x fan_out
    RealTensor g_gamma;  // 1 x fan_out
    RealTensor g_beta;   // 1 x fan_out
};

class Network {
public:
    Network() = default;

    // Glorot-uniform weights, identity BN, fresh optimizer state.
    static Network init(const NetworkConfig& cfg);

    const NetworkConfig& config() const { return cfg_; }
    std::vector<LayerState>& layers() { return layers_; }
    const std::vector<LayerState>& layers() const { return layers_; }
    std::size_t depth() const { return layers_.size(); }

    // One training-mode forward pass: binarize weights, multiply (packed
    // kernel on binary/binary products, float kernel on the real first
    // layer), batch-normalize, binarize hidden activations. `step` keys the
    // stochastic binarizer when enabled.
    std::pair<RealTensor, ForwardCache> forward_train(const RealTensor& x, std::uint64_t step = 0);

    // Inference-mode class scores (running BN statistics, deterministic
    // sign activations); the "training path" evaluator.
    RealTensor evaluate_scores(const RealTensor& x_scaled) const;
    std::vector<int> predict(const Dataset& data, std::size_t chunk = 1024) const;
    double error_rate(const Dataset& data) const;

private:
    NetworkConfig cfg_;
    std::vector<LayerState> layers_;

    void refresh_binary_weights();
};

// Backward pass of the straight-through training loop. Consumes the cache
// (a second call on the same cache throws StaleCache).
std::vector<LayerGrads> backward_train(Network& net, ForwardCache& cache,
                                       const RealTensor& g_out);

// Square hinge loss over one-vs-all +-1 targets; returns the mean loss and
// the gradient w.r.t. the output scores.
std::pair<double, RealTensor> hinge_loss(const RealTensor& scores, std::span<const int> labels);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_error = 1.0;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    double best_val_error = 1.0;
    double test_error = 1.0;  // at the best-validation checkpoint; NaN if no test set
};

// Minibatch training per the straight-through recipe: forward, backward,
// optimizer step with Glorot-scaled learning rate, weight clip, per-epoch
// learning rate decay. Keeps the best-validation snapshot in `net`.
// `on_epoch`, when set, is called after each epoch's validation pass.
using EpochCallback = std::function<void(const EpochMetrics&)>;
TrainResult train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  const Dataset* test_set = nullptr, const EpochCallback& on_epoch = {});

// ---- Packed inference ----

// A frozen network: packed weights plus per-neuron sign thresholds for the
// hidden layers and the affine BN for the output layer.
struct InferenceLayer {
    enum class Kind : std::uint8_t {
        HiddenThreshold = 0,  // a^b = +1 iff (s >= tau) xor flip
        OutputAffine = 1,     // scores = bn_affine(s)
        HiddenExplicitBn = 2  // fold undefined (some gamma_eff = 0): sign(bn_affine(s))
    };

    std::size_t fan_in = 0, fan_out = 0;
    Kind kind = Kind::HiddenThreshold;
    BitMatrix w_t;  // fan_out x fan_in
    BnParams bn;    // running statistics
    RealTensor gamma_eff, istd_eff;     // 1 x fan_out
    RealTensor tau;                     // 1 x fan_out (HiddenThreshold only)
    std::vector<std::uint8_t> flip;     // per neuron, HiddenThreshold only
    RealTensor weight_colsum;           // 1 x fan_out, first layer only
};

struct InferenceModel {
    BnVariant bn_variant = BnVariant::Vanilla;
    std::vector<InferenceLayer> layers;
};

// Freezes packed weights and folds Sign(BatchNorm(.)) into per-neuron
// thresholds: tau = mu - beta / (gamma_eff * istd_eff), comparison direction
// flipped where the combined scale is negative.
InferenceModel export_inference(const Network& net);

// Runs the frozen model on raw 8-bit inputs: fixed-point first layer, then
// XNOR-popcount products with threshold activations. Returns class scores.
RealTensor infer(const InferenceModel& model, const RealTensor& x_raw, int threads = 0);
std::vector<int> infer_predict(const InferenceModel& model, const Dataset& data,
                               std::size_t chunk = 1024, int threads = 0);

// "BNNM" model container (little-endian).
void save_model(const std::filesystem::path& path, const InferenceModel& model);
InferenceModel load_model(const std::filesystem::path& path);

int argmax_row(const RealTensor& scores, std::size_t row);

}  // namespace bnn
