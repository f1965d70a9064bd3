// Python bindings for the core operations: packing, the XNOR kernels,
// quantizers, normalization, optimizers, training and the analysis tools.
// Matrices cross the boundary as 2-D float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <array>

#include "bnn/analysis.hpp"
#include "bnn/binarize.hpp"
#include "bnn/bitops.hpp"
#include "bnn/data.hpp"
#include "bnn/network.hpp"
#include "bnn/normalization.hpp"
#include "bnn/optimizers.hpp"
#include "bnn/tensor.hpp"
#include "bnn/version.hpp"

namespace py = pybind11;
using namespace bnn;

namespace {

RealTensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
    RealTensor t(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::memcpy(t.data(), arr.data(), t.size() * sizeof(double));
    return t;
}

py::array_t<double> to_numpy(const RealTensor& t) {
    py::array_t<double> arr({t.rows(), t.cols()});
    std::memcpy(arr.mutable_data(), t.data(), t.size() * sizeof(double));
    return arr;
}

using NumpyF64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

Dataset dataset_from_arrays(const NumpyF64& images, const std::vector<int>& labels,
                            bool raw_u8, std::size_t num_classes) {
    RealTensor imgs = to_tensor(images);
    Dataset d;
    d.n = imgs.rows();
    d.dim = imgs.cols();
    d.labels = labels;
    d.num_classes = num_classes;
    d.raw_u8 = raw_u8;
    if (raw_u8) {
        d.raw.resize(d.n * d.dim);
        for (std::size_t i = 0; i < imgs.size(); ++i) {
            double v = imgs[i];
            if (v < 0.0 || v > 255.0 || v != std::floor(v)) {
                throw InputOutOfRange("raw images must hold integers in [0,255]");
            }
            d.raw[i] = static_cast<std::uint8_t>(v);
        }
    } else {
        d.real = std::move(imgs);
    }
    if (d.labels.size() != d.n) throw ShapeMismatch("label count != image count");
    return d;
}

NetworkConfig config_from_kwargs(std::vector<std::size_t> layers, const std::string& binarize,
                                 const std::string& bn, const std::string& optimizer,
                                 const std::string& schedule, double lr, double decay,
                                 std::size_t period, std::size_t batch, std::size_t epochs,
                                 std::uint64_t seed, double dropout, int threads) {
    NetworkConfig cfg;
    cfg.layer_sizes = std::move(layers);
    cfg.activation_binarize =
        binarize == "stoch" ? BinarizeMode::stochastic(seed) : BinarizeMode::deterministic();
    cfg.bn_variant = bn == "shift" ? BnVariant::ShiftBased : BnVariant::Vanilla;
    cfg.optimizer =
        optimizer == "shift-adamax" ? OptimizerKind::ShiftAdaMax : OptimizerKind::Adam;
    cfg.lr_schedule.kind = schedule == "shift" ? LrSchedule::Kind::ShiftDecay
                                               : LrSchedule::Kind::Exponential;
    cfg.eta0 = lr;
    cfg.lr_schedule.lambda = decay;
    cfg.lr_schedule.period = period;
    cfg.batch_size = batch;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.dropout_rate = dropout;
    cfg.threads = threads;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Binarized neural network engine: XNOR-popcount kernels, "
              "straight-through training, shift-based normalization and the "
              "energy/filter analysis tools";
    m.attr("__version__") = version();
    m.attr("GIT_DESCRIBE") = git_describe();

    py::register_exception<Error>(m, "BnnError");

    // --- packed tensors ---
    py::class_<BitMatrix>(m, "BitMatrix")
        .def_property_readonly("rows", &BitMatrix::rows)
        .def_property_readonly("cols", &BitMatrix::cols)
        .def_property_readonly("words_per_row", &BitMatrix::words_per_row)
        .def("bit", &BitMatrix::bit, py::arg("i"), py::arg("j"))
        .def("__repr__", [](const BitMatrix& b) {
            return "<BitMatrix " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                   ">";
        });

    m.def("pack", [](const NumpyF64& arr) { return pack(to_tensor(arr)); },
          "Pack a +-1 matrix one bit per element (bit 1 encodes +1)");
    m.def("unpack", [](const BitMatrix& b) { return to_numpy(unpack(b)); });
    m.def("real_gemm",
          [](const NumpyF64& a, const NumpyF64& b, int threads) {
              return to_numpy(real_gemm(to_tensor(a), to_tensor(b), threads));
          },
          py::arg("a"), py::arg("b"), py::arg("threads") = 0,
          "Plain float matrix product (the baseline kernel)");
    m.def("xnor_gemm",
          [](const BitMatrix& a, const BitMatrix& w_t, int threads) {
              return to_numpy(xnor_gemm(a, w_t, threads));
          },
          py::arg("a"), py::arg("w_t"), py::arg("threads") = 0,
          "Packed XNOR-popcount product; weights pre-transposed (n x k)");
    m.def("xnor_gemm_pm1",
          [](const NumpyF64& a, const NumpyF64& w, int threads) {
              RealTensor at = to_tensor(a);
              RealTensor wt = to_tensor(w);
              return to_numpy(xnor_gemm(pack(at), pack(transpose(wt)), threads));
          },
          py::arg("a"), py::arg("w"), py::arg("threads") = 0,
          "Convenience: pack +-1 operands and multiply (a @ w)");
    m.def("fixed_point_first_layer",
          [](const NumpyF64& x, const NumpyF64& w, int threads) {
              return to_numpy(
                  fixed_point_first_layer(to_tensor(x), pack(transpose(to_tensor(w))), threads));
          },
          py::arg("x"), py::arg("w"), py::arg("threads") = 0,
          "Exact 8-bit fixed-point layer: x (ints in [0,255]) @ w (+-1)");

    // --- binarization ---
    m.def("sign_binarize",
          [](const NumpyF64& x) { return to_numpy(sign_binarize(to_tensor(x))); });
    m.def("hard_sigmoid", &hard_sigmoid, py::arg("x"));
    m.def("hard_tanh", [](const NumpyF64& x) { return to_numpy(hard_tanh(to_tensor(x))); });
    m.def("ste_backward",
          [](const NumpyF64& g, const NumpyF64& r) {
              return to_numpy(ste_backward(to_tensor(g), to_tensor(r)));
          },
          py::arg("g_q"), py::arg("r"),
          "Straight-through gradient: g_q masked to |r| <= 1");
    m.def("stochastic_binarize",
          [](const NumpyF64& x, std::uint64_t seed, std::uint64_t layer, std::uint64_t step) {
              return to_numpy(
                  stochastic_binarize(to_tensor(x), BinarizeMode::stochastic(seed), layer, step));
          },
          py::arg("x"), py::arg("seed"), py::arg("layer") = 0, py::arg("step") = 0);

    // --- normalization / optimizer scalars ---
    m.def("ap2", &ap2, py::arg("x"), "sign(x) * 2^round(log2 |x|); ap2(0) = 0");
    m.def("glorot_scale", &glorot_scale, py::arg("fan_in"), py::arg("fan_out"));
    m.def("schedule_lr",
          [](double eta0, const std::string& kind, double lambda, std::size_t period,
             std::size_t epoch) {
              LrSchedule s;
              s.kind = kind == "shift" ? LrSchedule::Kind::ShiftDecay
                                       : LrSchedule::Kind::Exponential;
              s.lambda = lambda;
              s.period = period;
              return schedule_lr(eta0, s, epoch);
          },
          py::arg("eta0"), py::arg("kind"), py::arg("lambda_"), py::arg("period"),
          py::arg("epoch"));
    m.def("clip_weights",
          [](const NumpyF64& w) { return to_numpy(clip_weights(to_tensor(w))); });
    m.def("hinge_loss",
          [](const NumpyF64& scores, const std::vector<int>& labels) {
              auto [loss, g] = hinge_loss(to_tensor(scores), labels);
              return py::make_tuple(loss, to_numpy(g));
          },
          py::arg("scores"), py::arg("labels"),
          "Square hinge loss over one-vs-all +-1 targets: (loss, grad)");

    // --- training / inference ---
    py::class_<EpochMetrics>(m, "EpochMetrics")
        .def_readonly("epoch", &EpochMetrics::epoch)
        .def_readonly("lr", &EpochMetrics::lr)
        .def_readonly("train_loss", &EpochMetrics::train_loss)
        .def_readonly("val_error", &EpochMetrics::val_error);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("epochs", &TrainResult::epochs)
        .def_readonly("best_epoch", &TrainResult::best_epoch)
        .def_readonly("best_val_error", &TrainResult::best_val_error)
        .def_readonly("test_error", &TrainResult::test_error);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("n", [](const Dataset& d) { return d.n; })
        .def_property_readonly("dim", [](const Dataset& d) { return d.dim; })
        .def_readonly("labels", &Dataset::labels)
        .def_property_readonly("num_classes", [](const Dataset& d) { return d.num_classes; });

    m.def("make_dataset", &dataset_from_arrays, py::arg("images"), py::arg("labels"),
          py::arg("raw_u8") = true, py::arg("num_classes") = 10,
          "Wrap numpy images/labels; raw_u8 images hold integers in [0,255]");
    m.def("make_synthetic",
          [](const std::string& kind, std::size_t n, std::uint64_t seed) {
              return make_synthetic(kind == "parity" ? SyntheticKind::Parity
                                                     : SyntheticKind::GaussianBlobs,
                                    n, seed);
          },
          py::arg("kind"), py::arg("n"), py::arg("seed") = 0);
    m.def("load_mnist", [](const std::filesystem::path& dir) {
        auto splits = load_mnist(dir);
        return py::make_tuple(std::move(splits.train), std::move(splits.val),
                              std::move(splits.test));
    });
    m.def("default_data_dir", &default_data_dir);

    py::class_<Network>(m, "Network")
        .def("error_rate", &Network::error_rate, py::arg("data"))
        .def("predict", [](const Network& net, const Dataset& d) { return net.predict(d); });

    py::class_<InferenceModel>(m, "InferenceModel")
        .def_property_readonly("num_layers",
                               [](const InferenceModel& m_) { return m_.layers.size(); });

    m.def("train",
          [](const Dataset& train_set, const Dataset& val_set, const Dataset* test_set,
             std::vector<std::size_t> layers, const std::string& binarize, const std::string& bn,
             const std::string& optimizer, const std::string& schedule, double lr, double decay,
             std::size_t period, std::size_t batch, std::size_t epochs, std::uint64_t seed,
             double dropout, int threads) {
              NetworkConfig cfg =
                  config_from_kwargs(std::move(layers), binarize, bn, optimizer, schedule, lr,
                                     decay, period, batch, epochs, seed, dropout, threads);
              Network net = Network::init(cfg);
              TrainResult result = train(net, train_set, val_set, test_set);
              return py::make_tuple(std::move(net), result);
          },
          py::arg("train_set"), py::arg("val_set"), py::arg("test_set") = nullptr,
          py::arg("layers") = std::vector<std::size_t>{784, 512, 512, 10},
          py::arg("binarize") = "det", py::arg("bn") = "vanilla", py::arg("optimizer") = "adam",
          py::arg("schedule") = "exp", py::arg("lr") = 3e-3, py::arg("decay") = 0.98,
          py::arg("period") = 1, py::arg("batch") = 100, py::arg("epochs") = 10,
          py::arg("seed") = 1, py::arg("dropout") = 0.0, py::arg("threads") = 0,
          "Straight-through training; returns (network, result)");

    m.def("export_inference", &export_inference, py::arg("net"));
    m.def("infer",
          [](const InferenceModel& model, const NumpyF64& x_raw, int threads) {
              return to_numpy(infer(model, to_tensor(x_raw), threads));
          },
          py::arg("model"), py::arg("x_raw"), py::arg("threads") = 0,
          "Packed inference on raw 8-bit inputs; returns class scores");
    m.def("infer_predict",
          [](const InferenceModel& model, const Dataset& d) { return infer_predict(model, d); },
          py::arg("model"), py::arg("data"));
    m.def("save_model", &save_model, py::arg("path"), py::arg("model"));
    m.def("load_model", &load_model, py::arg("path"));

    // --- benchmark ---
    py::class_<GemmReport>(m, "GemmReport")
        .def_readonly("kernel", &GemmReport::kernel)
        .def_readonly("m", &GemmReport::m)
        .def_readonly("n", &GemmReport::n)
        .def_readonly("k", &GemmReport::k)
        .def_readonly("threads", &GemmReport::threads)
        .def_readonly("wall_time_s", &GemmReport::wall_time_s)
        .def_readonly("gops", &GemmReport::effective_gops)
        .def_readonly("checksum", &GemmReport::checksum)
        .def_readonly("ok", &GemmReport::ok)
        .def_readonly("error", &GemmReport::error);

    m.def("bench_gemm",
          [](const std::vector<std::array<std::size_t, 3>>& sizes,
             const std::vector<std::string>& kernels, int threads, std::uint64_t seed) {
              std::vector<GemmKernel> ks;
              for (const auto& k : kernels) {
                  if (k == "baseline") ks.push_back(GemmKernel::Baseline);
                  if (k == "xnor") ks.push_back(GemmKernel::Xnor);
              }
              return bench_gemm(sizes, ks, threads, seed);
          },
          py::arg("sizes"), py::arg("kernels") = std::vector<std::string>{"baseline", "xnor"},
          py::arg("threads") = 0, py::arg("seed") = 42);

    // --- analysis ---
    py::class_<FilterStats>(m, "FilterStats")
        .def_readonly("total_slices", &FilterStats::total_slices)
        .def_readonly("unique_count", &FilterStats::unique_count)
        .def_readonly("fraction_unique", &FilterStats::fraction_unique)
        .def_readonly("multiplicity_histogram", &FilterStats::multiplicity_histogram);

    m.def("unique_filters",
          [](const NumpyF64& bank_values, std::size_t num_filters, std::size_t channels,
             std::size_t k, bool inverses_same) {
              FilterBank bank;
              bank.num_filters = num_filters;
              bank.channels = channels;
              bank.k = k;
              RealTensor v = to_tensor(bank_values);
              bank.values.resize(v.size());
              for (std::size_t i = 0; i < v.size(); ++i) {
                  bank.values[i] = static_cast<std::int8_t>(v[i]);
              }
              return unique_filters(bank, inverses_same);
          },
          py::arg("values"), py::arg("num_filters"), py::arg("channels"), py::arg("k"),
          py::arg("count_inverses_as_same") = false,
          "Distinct 2-D filter statistics for a +-1 bank (values flattened 2-D)");

    m.def("energy_estimate",
          [](const std::vector<std::size_t>& layers, const std::string& precision) {
              EnergyReport r = energy_estimate(
                  layers, precision == "bnn" ? Precision::Bnn : Precision::Fp32);
              py::dict out;
              out["macs"] = r.macs;
              out["memory_bits"] = r.memory_bits;
              out["memory_bytes"] = r.memory_bytes;
              out["accesses_64bit"] = r.accesses;
              out["arithmetic_pJ"] = r.arithmetic_pj;
              out["memory_pJ"] = r.memory_pj;
              out["pJ_per_access"] = r.access_pj;
              return out;
          },
          py::arg("layers"), py::arg("precision") = "fp32");
}
