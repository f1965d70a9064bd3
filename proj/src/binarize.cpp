#include "bnn/binarize.hpp"

#include <algorithm>
#include <cmath>

#include "bnn/rng.hpp"

namespace bnn {

RealTensor sign_binarize(const RealTensor& x) {
    RealTensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (!std::isfinite(v)) {
            throw NonFiniteInput("sign_binarize: non-finite element at index " +
                                 std::to_string(i));
        }
        out[i] = v >= 0.0 ? 1.0 : -1.0;
    }
    return out;
}

double hard_sigmoid(double x) {
    return std::max(0.0, std::min(1.0, (x + 1.0) / 2.0));
}

RealTensor stochastic_binarize(const RealTensor& x, const BinarizeMode& mode,
                               std::uint64_t layer_index, std::uint64_t step) {
    if (!mode.is_stochastic()) {
        throw ModeMismatch("stochastic_binarize called in deterministic mode");
    }
    RealTensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = hard_sigmoid(x[i]);
        double u = rng::to_unit_double(rng::mix({mode.seed, layer_index, step, i}));
        out[i] = u < p ? 1.0 : -1.0;
    }
    return out;
}

RealTensor ste_backward(const RealTensor& g_q, const RealTensor& r) {
    if (!g_q.same_shape(r)) {
        throw ShapeMismatch("ste_backward: gradient and pre-activation shapes differ");
    }
    RealTensor out(g_q.rows(), g_q.cols());
    for (std::size_t i = 0; i < g_q.size(); ++i) {
        out[i] = std::fabs(r[i]) <= 1.0 ? g_q[i] : 0.0;
    }
    return out;
}

RealTensor hard_tanh(const RealTensor& x) {
    RealTensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::max(-1.0, std::min(1.0, x[i]));
    }
    return out;
}

}  // namespace bnn
