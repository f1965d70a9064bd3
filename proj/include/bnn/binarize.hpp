#pragma once

#include <cstdint>

#include "bnn/tensor.hpp"

namespace bnn {

// How activations (and, in principle, weights) are quantized to +-1.
// Stochastic mode is keyed by (seed, layer, step, element) through a
// counter-based generator, so results do not depend on evaluation order.
struct BinarizeMode {
    enum class Kind { Deterministic, Stochastic };

    Kind kind = Kind::Deterministic;
    std::uint64_t seed = 0;

    static BinarizeMode deterministic() { return {Kind::Deterministic, 0}; }
    static BinarizeMode stochastic(std::uint64_t seed) { return {Kind::Stochastic, seed}; }
    bool is_stochastic() const { return kind == Kind::Stochastic; }
};

// Sign(x): +1 if x >= 0 else -1. Negative zero counts as >= 0.
RealTensor sign_binarize(const RealTensor& x);

// clip((x+1)/2, 0, 1)
double hard_sigmoid(double x);

// Each element independently +1 with probability hard_sigmoid(x), else -1.
RealTensor stochastic_binarize(const RealTensor& x, const BinarizeMode& mode,
                               std::uint64_t layer_index = 0, std::uint64_t step = 0);

// Straight-through estimator: g_r = g_q where |r| <= 1, else 0.
RealTensor ste_backward(const RealTensor& g_q, const RealTensor& r);

// Htanh(x) = clip(x, -1, 1); its a.e. derivative is the STE mask.
RealTensor hard_tanh(const RealTensor& x);

}  // namespace bnn
