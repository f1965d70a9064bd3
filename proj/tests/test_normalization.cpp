#include <doctest.h>

#include <cmath>

#include "bnn/normalization.hpp"
#include "bnn/rng.hpp"
#include "support.hpp"

using namespace bnn;
using testsupport::fd_grad;
using testsupport::near_ap2_boundary;
using testsupport::random_gaussian;

TEST_SUITE("normalization") {

TEST_CASE("ap2 fixed points and formula cases") {
    CHECK(ap2(4.0) == 4.0);
    CHECK(ap2(0.8) == 1.0);   // round(log2 0.8) = round(-0.32) = 0
    CHECK(ap2(-6.0) == -8.0);  // round(log2 6) = round(2.585) = 3
    CHECK(ap2(0.0) == 0.0);
}

TEST_CASE("ap2 is exact on powers of two and odd") {
    for (int k = -30; k <= 30; ++k) {
        double v = std::ldexp(1.0, k);
        CHECK(ap2(v) == v);
        CHECK(ap2(-v) == -v);
    }
    rng::SplitMix g(17);
    for (int i = 0; i < 100; ++i) {
        double x = g.next_uniform(-100, 100);
        CHECK(ap2(-x) == -ap2(x));
    }
}

TEST_CASE("ap2 ratio stays within the half-octave band") {
    rng::SplitMix g(18);
    for (int i = 0; i < 500; ++i) {
        double x = std::exp(g.next_uniform(-20, 20));
        double ratio = ap2(x) / x;
        CHECK(ratio >= std::exp2(-0.5) * (1 - 1e-12));
        CHECK(ratio <= std::exp2(0.5) * (1 + 1e-12));
    }
}

TEST_CASE("constant feature column normalizes to beta") {
    BnParams p = BnParams::init(2);
    p.beta(0, 0) = 0.7;
    p.beta(0, 1) = -0.2;
    RealTensor x(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        x(i, 0) = 3.0;
        x(i, 1) = -1.5;
    }
    auto [y, cache] = bn_forward(x, p, true);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(y(i, 0) == doctest::Approx(0.7));
        CHECK(y(i, 1) == doctest::Approx(-0.2));
    }
}

TEST_CASE("training output is standardized") {
    BnParams p = BnParams::init(4);
    RealTensor x = random_gaussian(2000, 4, 7);
    auto [y, cache] = bn_forward(x, p, true);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i) mean += y(i, j);
        mean /= static_cast<double>(y.rows());
        for (std::size_t i = 0; i < y.rows(); ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= static_cast<double>(y.rows());
        CHECK(std::fabs(mean) < 1e-10);
        CHECK(var > 0.9);
        CHECK(var < 1.1);
    }
}

TEST_CASE("two-sample batch matches the closed form") {
    const double a = 1.7, b = -0.4, gamma = 1.3, beta = 0.25, eps = 1e-5;
    BnParams p = BnParams::init(1);
    p.gamma(0, 0) = gamma;
    p.beta(0, 0) = beta;
    p.epsilon = eps;
    RealTensor x = RealTensor::from_data(2, 1, {a, b});
    auto [y, cache] = bn_forward(x, p, true);
    // mu = (a+b)/2, sigma^2 = ((a-b)/2)^2, hand-derived.
    const double mu = (a + b) / 2;
    const double var = (a - mu) * (a - mu);
    const double expect_a = gamma * (a - mu) / std::sqrt(var + eps) + beta;
    const double expect_b = gamma * (b - mu) / std::sqrt(var + eps) + beta;
    CHECK(y(0, 0) == doctest::Approx(expect_a).epsilon(1e-12));
    CHECK(y(1, 0) == doctest::Approx(expect_b).epsilon(1e-12));
}

TEST_CASE("training mode needs at least two samples") {
    BnParams p = BnParams::init(3);
    CHECK_THROWS_AS(bn_forward(RealTensor(1, 3), p, true), DegenerateBatch);
    CHECK_THROWS_AS(shift_bn_forward(RealTensor(1, 3), p, true), DegenerateBatch);
}

TEST_CASE("inference mode uses running statistics") {
    BnParams p = BnParams::init(1);
    p.running_mean(0, 0) = 2.0;
    p.running_var(0, 0) = 4.0;
    RealTensor x(3, 1, 2.0);
    auto [y, cache] = bn_forward(x, p, false);
    CHECK_FALSE(cache.valid);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y(i, 0) == doctest::Approx(0.0));
}

TEST_CASE("running statistics blend with momentum 0.9") {
    BnParams p = BnParams::init(1);
    RealTensor x = RealTensor::from_data(4, 1, {1.0, 3.0, 1.0, 3.0});  // mean 2, var 1
    bn_forward(x, p, true);
    CHECK(p.running_mean(0, 0) == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(p.running_var(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("shift variant: centered pm1 inputs give variance exactly 1") {
    // ap2(+-1) = +-1, so C * ap2(C) = 1 for every sample: hand evaluation of
    // the approximate-variance line.
    BnParams p = BnParams::init(1);
    p.epsilon = 0.0;
    p.running_var(0, 0) = 0.0;
    RealTensor x = RealTensor::from_data(4, 1, {1.0, -1.0, 1.0, -1.0});
    auto [y, cache] = shift_bn_forward(x, p, true);
    CHECK(p.running_var(0, 0) == doctest::Approx(0.1 * 1.0));  // batch var exactly 1
    CHECK(cache.inv_std(0, 0) == 1.0);
}

TEST_CASE("shift variant scale step is exact for power-of-two gamma") {
    BnParams pv = BnParams::init(1);
    BnParams ps = BnParams::init(1);
    pv.gamma(0, 0) = ps.gamma(0, 0) = 0.25;
    RealTensor x = RealTensor::from_data(4, 1, {1.0, -1.0, 1.0, -1.0});
    pv.epsilon = ps.epsilon = 0.0;
    auto [yv, cv] = bn_forward(x, pv, true);
    auto [ys, cs] = shift_bn_forward(x, ps, true);
    // Variance is exactly 1 here (pm1 inputs), so both paths share the same
    // normalization too and the outputs agree exactly.
    for (std::size_t i = 0; i < yv.size(); ++i) CHECK(yv[i] == ys[i]);
}

TEST_CASE("shift variant agrees with vanilla on most signs") {
    BnParams pv = BnParams::init(8);
    BnParams ps = BnParams::init(8);
    rng::SplitMix g(97);
    for (std::size_t j = 0; j < 8; ++j) {
        double gamma = g.next_uniform(0.5, 2.0);
        double beta = g.next_uniform(-0.5, 0.5);
        pv.gamma(0, j) = ps.gamma(0, j) = gamma;
        pv.beta(0, j) = ps.beta(0, j) = beta;
    }
    RealTensor x = random_gaussian(256, 8, 55, 0.3, 2.0);
    auto [yv, cv] = bn_forward(x, pv, true);
    auto [ys, cs] = shift_bn_forward(x, ps, true);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < yv.size(); ++i) {
        if ((yv[i] >= 0) == (ys[i] >= 0)) ++agree;
    }
    CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(yv.size()));
}

TEST_CASE("power-of-two multiplies in the shift path are exact") {
    // Multiplying any double by an exact power of two only changes the
    // exponent; verify against ldexp on the cached factors.
    BnParams p = BnParams::init(3);
    RealTensor x = random_gaussian(16, 3, 4321);
    auto [y, cache] = shift_bn_forward(x, p, true);
    for (std::size_t j = 0; j < 3; ++j) {
        double istd = cache.inv_std(0, j);
        int exp2val = static_cast<int>(std::llround(std::log2(istd)));
        CHECK(std::ldexp(1.0, exp2val) == istd);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            CHECK(cache.centered(i, j) * istd == std::ldexp(cache.centered(i, j), exp2val));
        }
    }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
    BnParams p = BnParams::init(3);
    RealTensor x = random_gaussian(6, 3, 11);
    auto [y, cache] = bn_forward(x, p, true);
    BnGrads grads = bn_backward(RealTensor(6, 3, 0.0), cache, p);
    for (std::size_t i = 0; i < grads.g_x.size(); ++i) CHECK(grads.g_x[i] == 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(grads.g_gamma(0, j) == 0.0);
        CHECK(grads.g_beta(0, j) == 0.0);
    }
}

TEST_CASE("g_beta is the column sum of g_y") {
    BnParams p = BnParams::init(4);
    RealTensor x = random_gaussian(8, 4, 12);
    RealTensor g_y = random_gaussian(8, 4, 13);
    auto [y, cache] = bn_forward(x, p, true);
    BnGrads grads = bn_backward(g_y, cache, p);
    for (std::size_t j = 0; j < 4; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 8; ++i) sum += g_y(i, j);
        CHECK(grads.g_beta(0, j) == doctest::Approx(sum).epsilon(1e-12));
    }
}

TEST_CASE("vanilla backward matches central differences") {
    BnParams p = BnParams::init(4);
    rng::SplitMix g(14);
    for (std::size_t j = 0; j < 4; ++j) {
        p.gamma(0, j) = g.next_uniform(0.5, 1.5);
        p.beta(0, j) = g.next_uniform(-1, 1);
    }
    RealTensor x = random_gaussian(8, 4, 15);
    RealTensor g_y = random_gaussian(8, 4, 16);

    BnParams p_fwd = p;
    auto [y, cache] = bn_forward(x, p_fwd, true);
    BnGrads grads = bn_backward(g_y, cache, p);

    auto forward = [&](const RealTensor& in) {
        BnParams scratch = p;
        return bn_forward(in, scratch, true).first;
    };
    for (std::size_t pi = 0; pi < 8; ++pi) {
        for (std::size_t q = 0; q < 4; ++q) {
            double fd = fd_grad(forward, x, g_y, pi, q, 1e-5);
            double an = grads.g_x(pi, q);
            CHECK(an == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("shift backward matches central differences of its own forward") {
    // The shift forward is piecewise linear in x; test points whose
    // effective 1/std factor sits near an ap2 rounding boundary are
    // rejected, everything else differentiates exactly.
    rng::SplitMix seeds(500);
    std::size_t tested = 0;
    while (tested < 3) {
        BnParams p = BnParams::init(4);
        for (std::size_t j = 0; j < 4; ++j) {
            p.gamma(0, j) = seeds.next_uniform(0.5, 1.5);
            p.beta(0, j) = seeds.next_uniform(-1, 1);
        }
        RealTensor x = random_gaussian(8, 4, seeds.next());
        RealTensor g_y = random_gaussian(8, 4, seeds.next());

        BnParams p_fwd = p;
        auto [y, cache] = shift_bn_forward(x, p_fwd, true);
        bool reject = false;
        for (std::size_t j = 0; j < 4; ++j) {
            // inv_std holds ap2(istd); recover the pre-rounding value from
            // the batch to test boundary distance.
            double var = 0.0, mu = 0.0;
            for (std::size_t i = 0; i < 8; ++i) mu += x(i, j);
            mu /= 8;
            for (std::size_t i = 0; i < 8; ++i) var += (x(i, j) - mu) * ap2(x(i, j) - mu);
            var = std::max(0.0, var / 8);
            if (near_ap2_boundary(1.0 / std::sqrt(var + p.epsilon))) reject = true;
        }
        if (reject) continue;
        ++tested;

        BnGrads grads = bn_backward(g_y, cache, p);
        auto forward = [&](const RealTensor& in) {
            BnParams scratch = p;
            return shift_bn_forward(in, scratch, true).first;
        };
        for (std::size_t pi = 0; pi < 8; ++pi) {
            for (std::size_t q = 0; q < 4; ++q) {
                double fd = fd_grad(forward, x, g_y, pi, q, 1e-5);
                double an = grads.g_x(pi, q);
                CHECK(an == doctest::Approx(fd).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("backward rejects mismatched caches") {
    BnParams p = BnParams::init(3);
    RealTensor x = random_gaussian(6, 3, 1);
    auto [y, cache] = bn_forward(x, p, true);
    CHECK_THROWS_AS(bn_backward(RealTensor(6, 2, 0.0), cache, p), CacheMismatch);
    BnCache stale;
    CHECK_THROWS_AS(bn_backward(RealTensor(6, 3, 0.0), stale, p), CacheMismatch);
}

}  // TEST_SUITE
