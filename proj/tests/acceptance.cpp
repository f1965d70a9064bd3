// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria. MNIST is read from BNN_DATA_DIR (or ./data/mnist or
// ~/data/mnist); see scripts/fetch_mnist.py.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bnn/analysis.hpp"
#include "bnn/bitops.hpp"
#include "bnn/data.hpp"
#include "bnn/network.hpp"
#include "bnn/rng.hpp"
#include "support.hpp"

using namespace bnn;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// The desk-scale MNIST run the acceptance anchors on: 784-512-512-10,
// deterministic binarization, batch 100, 10 epochs.
NetworkConfig mnist_config(BnVariant bn, OptimizerKind opt) {
    NetworkConfig cfg;
    cfg.layer_sizes = {784, 512, 512, 10};
    cfg.activation_binarize = BinarizeMode::deterministic();
    cfg.bn_variant = bn;
    cfg.optimizer = opt;
    cfg.batch_size = 100;
    cfg.epochs = 10;
    cfg.seed = 42;
    cfg.threads = 0;
    if (opt == OptimizerKind::Adam) {
        cfg.eta0 = 0.005;
        cfg.lr_schedule = {LrSchedule::Kind::Exponential, 0.7, 1};
    } else {
        // power-of-two step size; 1-bit right shift every 10 epochs
        cfg.eta0 = 0x1p-7;
        cfg.lr_schedule = {LrSchedule::Kind::ShiftDecay, 0.0, 10};
    }
    return cfg;
}

std::optional<MnistSplits> try_load_mnist() {
    auto dir = default_data_dir();
    if (!std::filesystem::exists(dir)) return std::nullopt;
    try {
        return load_mnist(dir);
    } catch (const Error&) {
        return std::nullopt;
    }
}

void criterion_1_kernel_exactness() {
    auto t0 = Clock::now();
    rng::SplitMix seeds(20160209);
    std::size_t trials = 0, mismatched = 0;
    for (; trials < 60; ++trials) {
        std::size_t m = 1 + seeds.next_below(256);
        std::size_t n = 1 + seeds.next_below(256);
        std::size_t k = 1 + seeds.next_below(256);
        RealTensor a = testsupport::random_pm1(m, k, seeds.next());
        RealTensor w_t = testsupport::random_pm1(n, k, seeds.next());
        RealTensor expect = real_gemm(a, transpose(w_t), 2);
        RealTensor got = xnor_gemm(pack(a), pack(w_t), 2);
        if (!testsupport::tensors_equal(expect, got)) ++mismatched;
    }
    double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << trials << " random shapes up to 256^3, mismatches " << mismatched << ", "
       << elapsed << " s";
    report(1, "kernel exactness", mismatched == 0 && elapsed < 30.0, os.str());
}

void criterion_2_kernel_speed() {
    auto t0 = Clock::now();
    std::array<std::size_t, 3> size{4096, 4096, 4096};
    std::array<GemmKernel, 2> kernels{GemmKernel::Baseline, GemmKernel::Xnor};
    auto reports = bench_gemm({&size, 1}, kernels, /*threads=*/1, /*seed=*/42);
    double elapsed = seconds_since(t0);
    bool ok = reports.size() == 2 && reports[0].ok && reports[1].ok;
    double ratio = 0.0;
    if (ok) {
        ratio = reports[0].wall_time_s / reports[1].wall_time_s;
        ok = ratio >= 4.0 && reports[0].checksum == reports[1].checksum && elapsed < 300.0;
    }
    std::printf("kernel,m,n,k,threads,wall_time_s,gops,checksum,speedup_vs_baseline\n");
    for (const auto& r : reports) {
        if (!r.ok) continue;
        std::printf("%s,%zu,%zu,%zu,%d,%.6g,%.6g,%.9g,%.6g\n", r.kernel.c_str(), r.m, r.n, r.k,
                    r.threads, r.wall_time_s, r.effective_gops, r.checksum,
                    reports[0].wall_time_s / r.wall_time_s);
    }
    std::ostringstream os;
    os.precision(4);
    os << "single-thread 4096^3 xnor speedup " << ratio << "x (need >= 4), " << elapsed << " s";
    report(2, "kernel speed", ok, os.str());
}

struct MnistRun {
    Network net;
    TrainResult result;
    double seconds = 0.0;
};

MnistRun run_mnist(const MnistSplits& data, const NetworkConfig& cfg) {
    MnistRun run;
    auto t0 = Clock::now();
    run.net = Network::init(cfg);
    run.result = train(run.net, data.train, data.val, &data.test);
    run.seconds = seconds_since(t0);
    return run;
}

void criterion_6_gradient_checks() {
    // Part A: 4-2-2 toy net, 100 probes against central differences of the
    // straight-through surrogate (hard-tanh activations), 1e-3 relative.
    rng::SplitMix seeds(777);
    std::size_t checked = 0, failed = 0, attempts = 0;
    while (checked < 100 && attempts < 500) {
        ++attempts;
        NetworkConfig cfg;
        cfg.layer_sizes = {4, 2, 2};
        cfg.batch_size = 4;
        cfg.seed = seeds.next();
        cfg.threads = 1;
        Network net = Network::init(cfg);
        for (auto& layer : net.layers()) {
            for (std::size_t j = 0; j < layer.fan_out; ++j) {
                layer.bn.gamma(0, j) = seeds.next_uniform(0.8, 1.2);
                layer.bn.beta(0, j) = seeds.next_uniform(-0.2, 0.2);
            }
        }
        RealTensor x = testsupport::random_uniform(4, 4, seeds.next(), -1, 1);
        std::vector<int> labels(4);
        for (auto& l : labels) l = static_cast<int>(seeds.next_below(2));
        if (testsupport::boundary_margin(net, x, labels) < 1e-4) continue;

        ForwardCache cache;
        testsupport::surrogate_forward(net, x, labels, &cache);
        auto [loss, g] = hinge_loss(cache.layers.back().a, labels);
        auto grads = backward_train(net, cache, g);

        const double h = 1e-5;
        for (int probe = 0; probe < 4 && checked < 100; ++probe) {
            std::size_t k = seeds.next_below(2);
            LayerState& layer = net.layers()[k];
            std::size_t i = seeds.next_below(layer.fan_in);
            std::size_t j = seeds.next_below(layer.fan_out);
            double saved = layer.w_real(i, j);
            layer.w_real(i, j) = saved + h;
            double hi = testsupport::surrogate_forward(net, x, labels, nullptr);
            layer.w_real(i, j) = saved - h;
            double lo = testsupport::surrogate_forward(net, x, labels, nullptr);
            layer.w_real(i, j) = saved;
            double fd = (hi - lo) / (2 * h);
            double an = grads[k].g_w(i, j);
            if (std::fabs(an - fd) > 1e-3 * std::max({std::fabs(an), std::fabs(fd), 1e-6})) {
                ++failed;
            }
            ++checked;
        }
    }

    // Part B: BN backward against central differences on 8x4 batches at
    // 1e-4 relative, both variants (the shift variant against its own
    // forward, rejecting points near ap2 rounding discontinuities).
    std::size_t bn_checked = 0, bn_failed = 0;
    rng::SplitMix bn_seeds(888);
    for (int variant = 0; variant < 2; ++variant) {
        const bool shift = variant == 1;
        std::size_t done = 0;
        while (done < 3) {
            BnParams p = BnParams::init(4);
            for (std::size_t j = 0; j < 4; ++j) {
                p.gamma(0, j) = bn_seeds.next_uniform(0.5, 1.5);
                p.beta(0, j) = bn_seeds.next_uniform(-1, 1);
            }
            RealTensor x = testsupport::random_gaussian(8, 4, bn_seeds.next());
            RealTensor g_y = testsupport::random_gaussian(8, 4, bn_seeds.next());
            if (shift) {
                bool reject = false;
                for (std::size_t j = 0; j < 4; ++j) {
                    double mu = 0.0, var = 0.0;
                    for (std::size_t i = 0; i < 8; ++i) mu += x(i, j);
                    mu /= 8;
                    for (std::size_t i = 0; i < 8; ++i) {
                        var += (x(i, j) - mu) * ap2(x(i, j) - mu);
                    }
                    var = std::max(0.0, var / 8);
                    if (testsupport::near_ap2_boundary(1.0 / std::sqrt(var + p.epsilon))) {
                        reject = true;
                    }
                }
                if (reject) continue;
            }
            ++done;

            BnParams p_fwd = p;
            auto [y, cache] = shift ? shift_bn_forward(x, p_fwd, true) : bn_forward(x, p_fwd, true);
            BnGrads grads = bn_backward(g_y, cache, p);
            auto forward = [&](const RealTensor& in) {
                BnParams scratch = p;
                return (shift ? shift_bn_forward(in, scratch, true)
                              : bn_forward(in, scratch, true))
                    .first;
            };
            for (std::size_t pi = 0; pi < 8; ++pi) {
                for (std::size_t q = 0; q < 4; ++q) {
                    double fd = testsupport::fd_grad(forward, x, g_y, pi, q, 1e-5);
                    double an = grads.g_x(pi, q);
                    if (std::fabs(an - fd) > 1e-4 * std::max({std::fabs(an), std::fabs(fd), 1e-8})) {
                        ++bn_failed;
                    }
                    ++bn_checked;
                }
            }
        }
    }

    std::ostringstream os;
    os << checked << " STE-surrogate probes (failed " << failed << "), " << bn_checked
       << " BN probes (failed " << bn_failed << ")";
    report(6, "gradient correctness", checked == 100 && failed == 0 && bn_failed == 0, os.str());
}

void criterion_7_filter_combinatorics() {
    // Exhaustive 3x3 bank.
    FilterBank bank;
    bank.num_filters = 512;
    bank.channels = 1;
    bank.k = 3;
    bank.values.resize(512 * 9);
    for (std::size_t pattern = 0; pattern < 512; ++pattern) {
        for (std::size_t bit = 0; bit < 9; ++bit) {
            bank.values[pattern * 9 + bit] = ((pattern >> bit) & 1u) ? 1 : -1;
        }
    }
    FilterStats plain = unique_filters(bank, false);
    FilterStats inv = unique_filters(bank, true);
    bool ok = plain.unique_count == 512 && inv.unique_count == 256;

    // Random banks against a brute-force pairwise oracle.
    auto oracle = [](const FilterBank& b, bool inverses_same) {
        const std::size_t n = b.slice_count();
        std::size_t unique = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool seen = false;
            for (std::size_t j = 0; j < i && !seen; ++j) {
                auto si = b.slice(i), sj = b.slice(j);
                bool eq = true, neg = true;
                for (std::size_t t = 0; t < si.size(); ++t) {
                    eq &= si[t] == sj[t];
                    neg &= si[t] == -sj[t];
                }
                seen = eq || (inverses_same && neg);
            }
            if (!seen) ++unique;
        }
        return unique;
    };
    rng::SplitMix seeds(31);
    std::size_t oracle_mismatches = 0;
    for (int trial = 0; trial < 10; ++trial) {
        FilterBank rnd = random_filter_bank(1 + seeds.next_below(16), 1 + seeds.next_below(8),
                                            1 + seeds.next_below(3), seeds.next());
        if (unique_filters(rnd, false).unique_count != oracle(rnd, false)) ++oracle_mismatches;
        if (unique_filters(rnd, true).unique_count != oracle(rnd, true)) ++oracle_mismatches;
    }
    std::ostringstream os;
    os << "exhaustive 3x3: " << plain.unique_count << " unique / " << inv.unique_count
       << " with inversion; oracle mismatches " << oracle_mismatches;
    report(7, "filter combinatorics", ok && oracle_mismatches == 0, os.str());
}

void criterion_8_energy_model() {
    std::vector<std::size_t> one_mac{1, 1};
    EnergyReport mac = energy_estimate(one_mac, Precision::Fp32);
    bool ok = mac.arithmetic_pj == 3.7 + 0.9;

    for (auto arch : {std::vector<std::size_t>{784, 512, 512, 10},
                      std::vector<std::size_t>{300, 40, 7}, std::vector<std::size_t>{9, 9}}) {
        EnergyReport fp = energy_estimate(arch, Precision::Fp32);
        EnergyReport bn = energy_estimate(arch, Precision::Bnn);
        ok = ok && fp.memory_bits == 32 * bn.memory_bits &&
             fp.memory_bytes == 32.0 * bn.memory_bytes;
    }
    std::ostringstream os;
    os << "fp32 MAC " << mac.arithmetic_pj << " pJ; weight-memory ratio 32:1 exact";
    report(8, "energy model", ok, os.str());
}

}  // namespace

int main() {
    std::printf("acceptance suite (%zu hardware threads available)\n",
                static_cast<std::size_t>(resolve_threads(0)));

    criterion_1_kernel_exactness();
    criterion_2_kernel_speed();

    auto mnist = try_load_mnist();
    std::optional<MnistRun> vanilla_run;
    if (!mnist) {
        const std::string msg =
            "MNIST data not found (set BNN_DATA_DIR or run scripts/fetch_mnist.py)";
        report(3, "MNIST desk-scale training", false, msg);
        report(4, "shift-based variants", false, msg);
        report(5, "inference-path equivalence", false, msg);
    } else {
        // Criterion 3: vanilla BN + ADAM.
        NetworkConfig cfg = mnist_config(BnVariant::Vanilla, OptimizerKind::Adam);
        vanilla_run = run_mnist(*mnist, cfg);
        {
            std::ostringstream os;
            os.precision(4);
            os << "test error " << 100.0 * vanilla_run->result.test_error
               << "% (need <= 5%), best val " << 100.0 * vanilla_run->result.best_val_error
               << "% at epoch " << vanilla_run->result.best_epoch << ", "
               << vanilla_run->seconds << " s";
            report(3, "MNIST desk-scale training",
                   vanilla_run->result.test_error <= 0.05 && vanilla_run->seconds <= 1800.0,
                   os.str());
        }

        // Criterion 4: shift-based BN + shift-based AdaMax within 1.5 points.
        {
            NetworkConfig shift_cfg = mnist_config(BnVariant::ShiftBased,
                                                   OptimizerKind::ShiftAdaMax);
            MnistRun shift_run = run_mnist(*mnist, shift_cfg);
            double delta =
                std::fabs(shift_run.result.test_error - vanilla_run->result.test_error);
            std::ostringstream os;
            os.precision(4);
            os << "shift test error " << 100.0 * shift_run.result.test_error << "% vs vanilla "
               << 100.0 * vanilla_run->result.test_error << "% (|delta| "
               << 100.0 * delta << " points, need <= 1.5), " << shift_run.seconds << " s";
            report(4, "shift-based variants", delta <= 0.015, os.str());
        }

        // Criterion 5: packed inference argmax equals the training-path
        // evaluator on every test sample.
        {
            InferenceModel model = export_inference(vanilla_run->net);
            auto packed = infer_predict(model, mnist->test);
            auto reference = vanilla_run->net.predict(mnist->test);
            std::size_t agree = 0;
            for (std::size_t i = 0; i < packed.size(); ++i) {
                if (packed[i] == reference[i]) ++agree;
            }
            std::ostringstream os;
            os << "argmax agreement " << agree << "/" << mnist->test.n;
            report(5, "inference-path equivalence",
                   agree == mnist->test.n && packed.size() == mnist->test.n, os.str());
        }
    }

    criterion_6_gradient_checks();
    criterion_7_filter_combinatorics();
    criterion_8_energy_model();

    // Criterion 9: rerunning the criterion-3 configuration reproduces the
    // model file byte for byte.
    if (!mnist || !vanilla_run) {
        report(9, "determinism", false, "requires the criterion-3 run");
    } else {
        NetworkConfig cfg = mnist_config(BnVariant::Vanilla, OptimizerKind::Adam);
        MnistRun rerun = run_mnist(*mnist, cfg);
        auto dir = std::filesystem::temp_directory_path();
        auto path_a = dir / "bnn_acceptance_a.bnnm";
        auto path_b = dir / "bnn_acceptance_b.bnnm";
        save_model(path_a, export_inference(vanilla_run->net));
        save_model(path_b, export_inference(rerun.net));
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream is(p, std::ios::binary);
            std::stringstream ss;
            ss << is.rdbuf();
            return ss.str();
        };
        bool identical = slurp(path_a) == slurp(path_b);
        std::filesystem::remove(path_a);
        std::filesystem::remove(path_b);
        std::ostringstream os;
        os << "same-seed rerun model files " << (identical ? "identical" : "DIFFER") << " ("
           << rerun.seconds << " s)";
        report(9, "determinism", identical, os.str());
    }

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
