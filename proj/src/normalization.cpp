#include "bnn/normalization.hpp"

#include <cmath>

namespace bnn {

BnParams BnParams::init(std::size_t features) {
    BnParams p;
    p.gamma = RealTensor(1, features, 1.0);
    p.beta = RealTensor(1, features, 0.0);
    p.running_mean = RealTensor(1, features, 0.0);
    p.running_var = RealTensor(1, features, 1.0);
    return p;
}

double ap2(double x) {
    if (x == 0.0) return 0.0;
    double r = std::round(std::log2(std::fabs(x)));
    return std::copysign(std::ldexp(1.0, static_cast<int>(r)), x);
}

namespace {

std::pair<RealTensor, BnCache> bn_forward_impl(const RealTensor& x, BnParams& p, bool training,
                                               BnVariant variant) {
    const std::size_t m = x.rows();
    const std::size_t f = x.cols();
    if (f != p.features()) {
        throw ShapeMismatch("bn_forward: " + std::to_string(f) + " features vs params " +
                            std::to_string(p.features()));
    }
    const bool shift = variant == BnVariant::ShiftBased;
    RealTensor y(m, f);

    if (!training) {
        auto factors = bn_inference_factors(p, variant);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                y(i, j) = bn_affine(x(i, j), factors.gamma_eff[j], p.beta[j], p.running_mean[j],
                                    factors.istd_eff[j]);
            }
        }
        return {std::move(y), BnCache{}};
    }

    if (m < 2) {
        throw DegenerateBatch("bn_forward: training batch of " + std::to_string(m));
    }

    BnCache cache;
    cache.variant = variant;
    cache.batch = m;
    cache.centered = RealTensor(m, f);
    cache.normalized = RealTensor(m, f);
    cache.inv_std = RealTensor(1, f);
    cache.gamma_eff = RealTensor(1, f);

    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < f; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += x(i, j);
        mu *= inv_m;

        double v = 0.0;
        if (shift) {
            // sigma^2 ~ (1/m) sum C(x) * ap2(C(x)); each term is >= 0, the
            // clamp below only guards the degenerate rounding corner.
            for (std::size_t i = 0; i < m; ++i) {
                double c = x(i, j) - mu;
                cache.centered(i, j) = c;
                v += c * ap2(c);
            }
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                double c = x(i, j) - mu;
                cache.centered(i, j) = c;
                v += c * c;
            }
        }
        v = std::max(0.0, v * inv_m);

        double istd = 1.0 / std::sqrt(v + p.epsilon);
        double istd_eff = shift ? ap2(istd) : istd;
        double gamma_eff = shift ? ap2(p.gamma[j]) : p.gamma[j];
        cache.inv_std[j] = istd_eff;
        cache.gamma_eff[j] = gamma_eff;
        for (std::size_t i = 0; i < m; ++i) {
            double xn = cache.centered(i, j) * istd_eff;
            cache.normalized(i, j) = xn;
            y(i, j) = gamma_eff * xn + p.beta[j];
        }

        p.running_mean[j] = p.momentum * p.running_mean[j] + (1.0 - p.momentum) * mu;
        p.running_var[j] = p.momentum * p.running_var[j] + (1.0 - p.momentum) * v;
    }

    cache.valid = true;
    return {std::move(y), std::move(cache)};
}

}  // namespace

std::pair<RealTensor, BnCache> bn_forward(const RealTensor& x, BnParams& p, bool training) {
    return bn_forward_impl(x, p, training, BnVariant::Vanilla);
}

std::pair<RealTensor, BnCache> shift_bn_forward(const RealTensor& x, BnParams& p, bool training) {
    return bn_forward_impl(x, p, training, BnVariant::ShiftBased);
}

BnGrads bn_backward(const RealTensor& g_y, const BnCache& cache, const BnParams& p) {
    if (!cache.valid) {
        throw CacheMismatch("bn_backward: cache is not from a training forward pass");
    }
    const std::size_t m = cache.centered.rows();
    const std::size_t f = cache.centered.cols();
    if (g_y.rows() != m || g_y.cols() != f || f != p.features()) {
        throw CacheMismatch("bn_backward: gradient shape does not match cache");
    }

    BnGrads out;
    out.g_x = RealTensor(m, f);
    out.g_gamma = RealTensor(1, f);
    out.g_beta = RealTensor(1, f);
    const double inv_m = 1.0 / static_cast<double>(m);
    const bool shift = cache.variant == BnVariant::ShiftBased;

    for (std::size_t j = 0; j < f; ++j) {
        const double gamma_eff = cache.gamma_eff[j];
        const double istd = cache.inv_std[j];

        double sum_gy = 0.0, sum_gy_xn = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sum_gy += g_y(i, j);
            sum_gy_xn += g_y(i, j) * cache.normalized(i, j);
        }
        out.g_beta[j] = sum_gy;
        out.g_gamma[j] = sum_gy_xn;

        if (shift) {
            // y = gamma_eff * (x - mu) * istd + beta with both factors
            // piecewise constant in x: only the mean couples the batch.
            const double s = gamma_eff * istd;
            const double mean_gy = sum_gy * inv_m;
            for (std::size_t i = 0; i < m; ++i) {
                out.g_x(i, j) = s * (g_y(i, j) - mean_gy);
            }
        } else {
            const double s = gamma_eff * istd * inv_m;
            for (std::size_t i = 0; i < m; ++i) {
                out.g_x(i, j) = s * (static_cast<double>(m) * g_y(i, j) - sum_gy -
                                     cache.normalized(i, j) * sum_gy_xn);
            }
        }
    }
    return out;
}

BnInferenceFactors bn_inference_factors(const BnParams& p, BnVariant variant) {
    const std::size_t f = p.features();
    const bool shift = variant == BnVariant::ShiftBased;
    BnInferenceFactors out;
    out.gamma_eff = RealTensor(1, f);
    out.istd_eff = RealTensor(1, f);
    for (std::size_t j = 0; j < f; ++j) {
        double istd = 1.0 / std::sqrt(p.running_var[j] + p.epsilon);
        out.istd_eff[j] = shift ? ap2(istd) : istd;
        out.gamma_eff[j] = shift ? ap2(p.gamma[j]) : p.gamma[j];
    }
    return out;
}

}  // namespace bnn
