#pragma once

#include <cstdint>

#include "bnn/tensor.hpp"

namespace bnn {

// Per-parameter moment estimates shared by ADAM and shift-based AdaMax.
// For AdaMax, v holds the exponentially weighted infinity norm.
struct OptimizerState {
    RealTensor m;  // first moment
    RealTensor v;  // second moment (ADAM) or max-norm (AdaMax)
    std::uint64_t t = 0;
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;

    static OptimizerState adam(std::size_t rows, std::size_t cols, double alpha = 1e-3,
                               double beta1 = 0.9, double beta2 = 0.999);
    // Defaults from the shift-based rule: alpha = 2^-10, 1-beta1 = 2^-3,
    // 1-beta2 = 2^-10.
    static OptimizerState shift_adamax(std::size_t rows, std::size_t cols, double alpha = 0x1p-10,
                                       double beta1 = 1.0 - 0x1p-3, double beta2 = 1.0 - 0x1p-10);
};

// Standard ADAM step with bias correction (eps = 1e-8). Mutates theta and s.
void adam_update(RealTensor& theta, const RealTensor& g, OptimizerState& s);

// Shift-based AdaMax: m_t = b1*m + (1-b1)*g; v_t = max(b2*v, |g|); the step
// applies ap2(alpha/(1-b1^t)) * m_t * ap2(1/v_t), i.e. both multiplications
// are power-of-two scalings. alpha and (1-beta1) must be exact powers of two.
// Coordinates with v_t = 0 do not move.
void shift_adamax_update(RealTensor& theta, const RealTensor& g, OptimizerState& s);

// Element-wise clamp to [-1, 1].
RealTensor clip_weights(const RealTensor& w);
void clip_weights_inplace(RealTensor& w);

// Glorot uniform bound sqrt(6 / (fan_in + fan_out)): both the weight init
// range and the per-layer learning-rate scale.
double glorot_scale(std::size_t fan_in, std::size_t fan_out);

struct LrSchedule {
    enum class Kind { Exponential, ShiftDecay };
    Kind kind = Kind::Exponential;
    double lambda = 0.98;    // per-period factor, Exponential only
    std::size_t period = 1;  // epochs per decay step
};

// Exponential: eta0 * lambda^floor(epoch/period);
// ShiftDecay:  eta0 * 2^-floor(epoch/period) (a 1-bit right shift per period).
double schedule_lr(double eta0, const LrSchedule& schedule, std::size_t epoch);

bool is_power_of_two(double x);

}  // namespace bnn
