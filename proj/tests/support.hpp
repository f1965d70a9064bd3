#pragma once

// Shared oracles and generators for the unit and acceptance suites. Nothing
// here calls back into the code paths it is used to check: gradients come
// from central differences, dot products from brute-force accumulation.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "bnn/network.hpp"
#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn::testsupport {

inline RealTensor random_pm1(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    RealTensor t(rows, cols);
    rng::SplitMix g(seed);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (g.next() & 1u) ? 1.0 : -1.0;
    return t;
}

inline RealTensor random_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo,
                                 double hi) {
    RealTensor t(rows, cols);
    rng::SplitMix g(seed);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = g.next_uniform(lo, hi);
    return t;
}

inline RealTensor random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                  double mean = 0.0, double sd = 1.0) {
    RealTensor t(rows, cols);
    rng::SplitMix g(seed);
    constexpr double kTwoPi = 6.283185307179586;
    for (std::size_t i = 0; i < t.size(); ++i) {
        double u1 = std::max(g.next_unit(), 1e-12);
        double u2 = g.next_unit();
        t[i] = mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }
    return t;
}

inline bool tensors_equal(const RealTensor& a, const RealTensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

// True when |x| sits within `margin` (log2 domain) of an ap2 rounding
// discontinuity, i.e. log2|x| close to a half-integer.
inline bool near_ap2_boundary(double x, double margin = 1e-6) {
    if (x == 0.0) return true;
    double l = std::log2(std::fabs(x));
    double frac = l - std::floor(l);
    return std::fabs(frac - 0.5) < margin;
}

// d/dx_pq of sum_ij g_y[ij] * forward(x)[ij] by central differences.
template <typename Forward>
double fd_grad(Forward&& forward, RealTensor x, const RealTensor& g_y, std::size_t p,
               std::size_t q, double h) {
    auto weighted = [&](const RealTensor& y) {
        double sum = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) sum += g_y[i] * y[i];
        return sum;
    };
    x(p, q) += h;
    double hi = weighted(forward(x));
    x(p, q) -= 2 * h;
    double lo = weighted(forward(x));
    return (hi - lo) / (2 * h);
}

// Differentiable stand-in for the training forward pass: weights are used
// as-is and activations go through hard_tanh instead of Sign. backward_train
// computes this network's exact gradient a.e., which makes central
// differences an independent oracle for the whole backward machinery.
inline double surrogate_forward(Network& net, const RealTensor& x, std::span<const int> labels,
                                ForwardCache* cache_out) {
    const std::size_t L = net.depth();
    ForwardCache cache;
    cache.layers.resize(L);
    RealTensor act = x;
    RealTensor output;
    for (std::size_t k = 0; k < L; ++k) {
        LayerCacheEntry& entry = cache.layers[k];
        entry.input_act = act;
        entry.w_eff = net.layers()[k].w_real;
        RealTensor s = real_gemm(act, entry.w_eff, 1);
        BnParams scratch = net.layers()[k].bn;  // keep running stats untouched
        auto [y, bn_cache] = bn_forward(s, scratch, true);
        entry.a = y;
        entry.bn_cache = std::move(bn_cache);
        if (k + 1 == L) {
            output = std::move(y);
        } else {
            act = hard_tanh(y);
        }
    }
    cache.valid = true;
    auto [loss, g] = hinge_loss(output, labels);
    if (cache_out) *cache_out = std::move(cache);
    return loss;
}

// Smallest margin to a non-smooth point (hard_tanh kink or hinge kink)
// anywhere in the surrogate forward at x.
inline double boundary_margin(Network& net, const RealTensor& x, std::span<const int> labels) {
    const std::size_t L = net.depth();
    double margin = 1e30;
    RealTensor act = x;
    RealTensor output;
    for (std::size_t k = 0; k < L; ++k) {
        RealTensor s = real_gemm(act, net.layers()[k].w_real, 1);
        BnParams scratch = net.layers()[k].bn;
        auto [y, bn_cache] = bn_forward(s, scratch, true);
        if (k + 1 == L) {
            output = std::move(y);
        } else {
            for (std::size_t i = 0; i < y.size(); ++i) {
                margin = std::min(margin, std::fabs(std::fabs(y[i]) - 1.0));
            }
            act = hard_tanh(y);
        }
    }
    for (std::size_t i = 0; i < output.rows(); ++i) {
        for (std::size_t c = 0; c < output.cols(); ++c) {
            double yv = labels[i] == static_cast<int>(c) ? 1.0 : -1.0;
            margin = std::min(margin, std::fabs(1.0 - yv * output(i, c)));
        }
    }
    return margin;
}

}  // namespace bnn::testsupport
