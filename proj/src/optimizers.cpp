#include "bnn/optimizers.hpp"

#include <cmath>

#include "bnn/normalization.hpp"

namespace bnn {

namespace {
constexpr double kAdamEps = 1e-8;

void check_shapes(const RealTensor& theta, const RealTensor& g, const OptimizerState& s,
                  const char* who) {
    if (!theta.same_shape(g) || !theta.same_shape(s.m) || !theta.same_shape(s.v)) {
        throw ShapeMismatch(std::string(who) + ": parameter/gradient/state shapes differ");
    }
}
}  // namespace

OptimizerState OptimizerState::adam(std::size_t rows, std::size_t cols, double alpha, double beta1,
                                    double beta2) {
    OptimizerState s;
    s.m = RealTensor(rows, cols);
    s.v = RealTensor(rows, cols);
    s.alpha = alpha;
    s.beta1 = beta1;
    s.beta2 = beta2;
    return s;
}

OptimizerState OptimizerState::shift_adamax(std::size_t rows, std::size_t cols, double alpha,
                                            double beta1, double beta2) {
    OptimizerState s;
    s.m = RealTensor(rows, cols);
    s.v = RealTensor(rows, cols);
    s.alpha = alpha;
    s.beta1 = beta1;
    s.beta2 = beta2;
    return s;
}

void adam_update(RealTensor& theta, const RealTensor& g, OptimizerState& s) {
    check_shapes(theta, g, s, "adam_update");
    s.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double m_hat = s.m[i] / bc1;
        const double v_hat = s.v[i] / bc2;
        theta[i] -= s.alpha * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
}

bool is_power_of_two(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) return false;
    int exp;
    return std::frexp(x, &exp) == 0.5;
}

void shift_adamax_update(RealTensor& theta, const RealTensor& g, OptimizerState& s) {
    check_shapes(theta, g, s, "shift_adamax_update");
    if (!is_power_of_two(s.alpha)) {
        throw NonPowerOfTwoHyperparam("shift_adamax: alpha " + std::to_string(s.alpha));
    }
    if (!is_power_of_two(1.0 - s.beta1)) {
        throw NonPowerOfTwoHyperparam("shift_adamax: 1-beta1 " + std::to_string(1.0 - s.beta1));
    }
    s.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double step_scale = ap2(s.alpha / bc1);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        s.v[i] = std::max(s.beta2 * s.v[i], std::fabs(g[i]));
        if (s.v[i] != 0.0) {
            theta[i] -= step_scale * s.m[i] * ap2(1.0 / s.v[i]);
        }
    }
}

RealTensor clip_weights(const RealTensor& w) {
    RealTensor out = w;
    clip_weights_inplace(out);
    return out;
}

void clip_weights_inplace(RealTensor& w) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::max(-1.0, std::min(1.0, w[i]));
    }
}

double glorot_scale(std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) {
        throw ZeroFan("glorot_scale: fan_in and fan_out must be >= 1");
    }
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double schedule_lr(double eta0, const LrSchedule& schedule, std::size_t epoch) {
    const std::size_t steps = schedule.period == 0 ? 0 : epoch / schedule.period;
    switch (schedule.kind) {
        case LrSchedule::Kind::Exponential:
            return eta0 * std::pow(schedule.lambda, static_cast<double>(steps));
        case LrSchedule::Kind::ShiftDecay:
            return std::ldexp(eta0, -static_cast<int>(steps));
    }
    return eta0;
}

}  // namespace bnn
