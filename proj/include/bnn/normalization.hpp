#pragma once

#include <utility>

#include "bnn/tensor.hpp"

namespace bnn {

enum class BnVariant { Vanilla, ShiftBased };

// Learned scale/shift plus running statistics, one entry per feature.
struct BnParams {
    RealTensor gamma;         // 1 x f
    RealTensor beta;          // 1 x f
    RealTensor running_mean;  // 1 x f
    RealTensor running_var;   // 1 x f
    double epsilon = 1e-5;
    double momentum = 0.9;

    static BnParams init(std::size_t features);
    std::size_t features() const { return gamma.cols(); }
};

// Everything backward needs from the matching forward call. For the shift
// variant, inv_std and gamma_eff hold the AP2 factors actually applied, and
// backward treats them as constants.
struct BnCache {
    BnVariant variant = BnVariant::Vanilla;
    std::size_t batch = 0;
    RealTensor centered;    // m x f
    RealTensor normalized;  // m x f
    RealTensor inv_std;     // 1 x f, effective normalization factor
    RealTensor gamma_eff;   // 1 x f, effective scale factor
    bool valid = false;
};

struct BnGrads {
    RealTensor g_x;
    RealTensor g_gamma;  // 1 x f
    RealTensor g_beta;   // 1 x f
};

// Approximate power of two: sign(x) * 2^round(log2|x|), with round-half-away
// ties and ap2(0) = 0. Multiplying a double by the result is exact.
double ap2(double x);

// Batch normalization over an m x f minibatch. In training mode (m >= 2)
// batch statistics are used and running statistics updated in place; in
// inference mode the running statistics are used and no cache is produced.
std::pair<RealTensor, BnCache> bn_forward(const RealTensor& x, BnParams& p, bool training);

// Shift-based variant: every multiplication by a statistic goes through its
// AP2 approximation (variance via C(x)*ap2(C(x)), normalization via
// ap2(1/sqrt(var+eps)), scaling via ap2(gamma)).
std::pair<RealTensor, BnCache> shift_bn_forward(const RealTensor& x, BnParams& p, bool training);

// Gradients w.r.t. input, gamma and beta from the cached forward. The shift
// variant differentiates its own forward a.e.: the AP2 factors are piecewise
// constant, so only the mean path contributes the batch coupling term.
BnGrads bn_backward(const RealTensor& g_y, const BnCache& cache, const BnParams& p);

// Per-feature factors used for inference-mode evaluation and for folding
// Sign(BatchNorm(.)) into thresholds: y = gamma_eff*(s - mean)*istd_eff + beta.
struct BnInferenceFactors {
    RealTensor gamma_eff;  // 1 x f
    RealTensor istd_eff;   // 1 x f
};
BnInferenceFactors bn_inference_factors(const BnParams& p, BnVariant variant);

// Single affine evaluation shared by the network evaluator and the packed
// inference path so both produce bit-identical values.
inline double bn_affine(double s, double gamma_eff, double beta, double mean, double istd_eff) {
    return gamma_eff * ((s - mean) * istd_eff) + beta;
}

}  // namespace bnn
