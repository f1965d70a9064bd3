// Command-line front end: train, eval, bench-gemm, analyze-filters,
// estimate-energy. Machine-readable output goes to stdout or --out;
// diagnostics go to stderr.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bnn/analysis.hpp"
#include "bnn/bitops.hpp"
#include "bnn/data.hpp"
#include "bnn/network.hpp"
#include "bnn/version.hpp"

using json = nlohmann::json;

namespace {

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::vector<std::size_t> parse_layer_list(const std::string& csv) {
    std::vector<std::size_t> sizes;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) sizes.push_back(std::stoull(item));
    }
    return sizes;
}

void write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream os(out_path);
    if (!os) throw bnn::IoError("cannot open " + out_path);
    os << text;
}

struct TrainOptions {
    std::string dataset = "mnist";
    std::string layers = "784,512,512,10";
    std::size_t epochs = 10;
    std::size_t batch = 100;
    double lr = 3e-3;
    std::string schedule = "exp";
    double decay = 0.98;
    std::size_t period = 1;
    std::string binarize = "det";
    std::string bn = "vanilla";
    std::string optimizer = "adam";
    double dropout = 0.0;
    std::uint64_t seed = 1;
    int threads = 0;
    std::size_t synthetic_n = 4096;
    std::string data_dir;
    std::string model_out = "model.bnnm";
    std::string manifest_out = "manifest.json";
};

bnn::NetworkConfig to_config(const TrainOptions& opt, std::size_t input_dim,
                             std::size_t num_classes) {
    bnn::NetworkConfig cfg;
    cfg.layer_sizes = parse_layer_list(opt.layers);
    if (!cfg.layer_sizes.empty()) {
        cfg.layer_sizes.front() = input_dim;
        cfg.layer_sizes.back() = num_classes;
    }
    cfg.activation_binarize = opt.binarize == "stoch" ? bnn::BinarizeMode::stochastic(opt.seed)
                                                      : bnn::BinarizeMode::deterministic();
    cfg.bn_variant = opt.bn == "shift" ? bnn::BnVariant::ShiftBased : bnn::BnVariant::Vanilla;
    cfg.optimizer = opt.optimizer == "shift-adamax" ? bnn::OptimizerKind::ShiftAdaMax
                                                    : bnn::OptimizerKind::Adam;
    cfg.lr_schedule.kind = opt.schedule == "shift" ? bnn::LrSchedule::Kind::ShiftDecay
                                                   : bnn::LrSchedule::Kind::Exponential;
    cfg.lr_schedule.lambda = opt.decay;
    cfg.lr_schedule.period = opt.period;
    cfg.eta0 = opt.lr;
    cfg.batch_size = opt.batch;
    cfg.epochs = opt.epochs;
    cfg.seed = opt.seed;
    cfg.dropout_rate = opt.dropout;
    cfg.threads = opt.threads;
    return cfg;
}

json config_to_json(const TrainOptions& opt) {
    return json{{"dataset", opt.dataset},
                {"layers", opt.layers},
                {"epochs", opt.epochs},
                {"batch", opt.batch},
                {"lr", opt.lr},
                {"schedule", opt.schedule},
                {"decay", opt.decay},
                {"period", opt.period},
                {"binarize", opt.binarize},
                {"bn", opt.bn},
                {"optimizer", opt.optimizer},
                {"dropout", opt.dropout},
                {"seed", opt.seed},
                {"threads", opt.threads},
                {"synthetic_n", opt.synthetic_n}};
}

// Flat key = value config (TOML-style scalars, # comments). Flags that were
// given on the command line take precedence over file values.
void apply_config_file(const std::string& path, const CLI::App* train_cmd, TrainOptions& opt) {
    std::ifstream is(path);
    if (!is) throw bnn::IoError("cannot open config " + path);

    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        auto b = s.find_first_not_of(ws);
        auto e = s.find_last_not_of(ws);
        if (b == std::string::npos) return std::string();
        s = s.substr(b, e - b + 1);
        if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                              (s.front() == '\'' && s.back() == '\''))) {
            s = s.substr(1, s.size() - 2);
        }
        return s;
    };

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw bnn::Error("config " + path + ":" + std::to_string(lineno) +
                             ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (train_cmd->count("--" + key) > 0) continue;  // flag overrides file

        if (key == "dataset") {
            opt.dataset = value;
        } else if (key == "layers") {
            opt.layers = value;
        } else if (key == "epochs") {
            opt.epochs = std::stoull(value);
        } else if (key == "batch") {
            opt.batch = std::stoull(value);
        } else if (key == "lr") {
            opt.lr = std::stod(value);
        } else if (key == "schedule") {
            opt.schedule = value;
        } else if (key == "decay") {
            opt.decay = std::stod(value);
        } else if (key == "period") {
            opt.period = std::stoull(value);
        } else if (key == "binarize") {
            opt.binarize = value;
        } else if (key == "bn") {
            opt.bn = value;
        } else if (key == "optimizer") {
            opt.optimizer = value;
        } else if (key == "dropout") {
            opt.dropout = std::stod(value);
        } else if (key == "seed") {
            opt.seed = std::stoull(value);
        } else if (key == "synthetic-n") {
            opt.synthetic_n = std::stoull(value);
        } else if (key == "data-dir") {
            opt.data_dir = value;
        } else if (key == "out") {
            opt.model_out = value;
        } else if (key == "manifest") {
            opt.manifest_out = value;
        } else {
            throw bnn::Error("config " + path + ":" + std::to_string(lineno) +
                             ": unknown key '" + key + "'");
        }
    }
}

void apply_manifest(const std::string& path, TrainOptions& opt) {
    std::ifstream is(path);
    if (!is) throw bnn::IoError("cannot open manifest " + path);
    json manifest = json::parse(is);
    const json& cfg = manifest.at("config");
    opt.dataset = cfg.value("dataset", opt.dataset);
    opt.layers = cfg.value("layers", opt.layers);
    opt.epochs = cfg.value("epochs", opt.epochs);
    opt.batch = cfg.value("batch", opt.batch);
    opt.lr = cfg.value("lr", opt.lr);
    opt.schedule = cfg.value("schedule", opt.schedule);
    opt.decay = cfg.value("decay", opt.decay);
    opt.period = cfg.value("period", opt.period);
    opt.binarize = cfg.value("binarize", opt.binarize);
    opt.bn = cfg.value("bn", opt.bn);
    opt.optimizer = cfg.value("optimizer", opt.optimizer);
    opt.dropout = cfg.value("dropout", opt.dropout);
    opt.seed = cfg.value("seed", opt.seed);
    opt.threads = cfg.value("threads", opt.threads);
    opt.synthetic_n = cfg.value("synthetic_n", opt.synthetic_n);
}

struct LoadedData {
    bnn::Dataset train, val, test;
};

LoadedData load_dataset(const TrainOptions& opt) {
    if (opt.dataset == "mnist") {
        std::filesystem::path dir =
            opt.data_dir.empty() ? bnn::default_data_dir() : std::filesystem::path(opt.data_dir);
        if (!std::filesystem::exists(dir)) {
            throw bnn::IoError("MNIST directory " + dir.string() +
                               " not found; set BNN_DATA_DIR or pass --data-dir "
                               "(scripts/fetch_mnist.py downloads the files)");
        }
        auto splits = bnn::load_mnist(dir);
        return {std::move(splits.train), std::move(splits.val), std::move(splits.test)};
    }
    bnn::SyntheticKind kind;
    if (opt.dataset == "parity") {
        kind = bnn::SyntheticKind::Parity;
    } else if (opt.dataset == "blobs") {
        kind = bnn::SyntheticKind::GaussianBlobs;
    } else {
        throw bnn::Error("unknown dataset '" + opt.dataset + "'");
    }
    LoadedData data;
    data.train = bnn::make_synthetic(kind, opt.synthetic_n, opt.seed);
    data.val = bnn::make_synthetic(kind, std::max<std::size_t>(opt.synthetic_n / 4, 4),
                                   opt.seed + 1);
    data.test = bnn::make_synthetic(kind, std::max<std::size_t>(opt.synthetic_n / 4, 4),
                                    opt.seed + 2);
    return data;
}

int cmd_train(TrainOptions& opt) {
    const std::string started = timestamp_utc();
    LoadedData data = load_dataset(opt);

    bnn::NetworkConfig cfg = to_config(opt, data.train.dim, data.train.num_classes);
    bnn::Network net = bnn::Network::init(cfg);

    std::cerr << "training " << opt.layers << " on " << opt.dataset << " (" << data.train.n
              << " samples, " << cfg.epochs << " epochs)\n";
    std::printf("%5s %12s %12s %12s\n", "epoch", "lr", "train_loss", "val_error");

    bnn::TrainResult result =
        bnn::train(net, data.train, data.val, &data.test, [](const bnn::EpochMetrics& m) {
            std::printf("%5zu %12.6g %12.6g %12.4f\n", m.epoch, m.lr, m.train_loss, m.val_error);
            std::fflush(stdout);
        });
    std::printf("best epoch %zu  val_error %.4f  test_error %.4f\n", result.best_epoch,
                result.best_val_error, result.test_error);

    bnn::InferenceModel model = bnn::export_inference(net);
    bnn::save_model(opt.model_out, model);
    std::cerr << "model written to " << opt.model_out << "\n";

    json manifest;
    manifest["config"] = config_to_json(opt);
    manifest["seed"] = opt.seed;
    manifest["git_describe"] = bnn::git_describe();
    manifest["version"] = bnn::version();
    manifest["started"] = started;
    manifest["finished"] = timestamp_utc();
    manifest["model"] = opt.model_out;
    json epochs = json::array();
    for (const auto& m : result.epochs) {
        epochs.push_back({{"epoch", m.epoch},
                          {"lr", m.lr},
                          {"train_loss", m.train_loss},
                          {"val_error", m.val_error}});
    }
    manifest["epochs"] = epochs;
    manifest["best_epoch"] = result.best_epoch;
    manifest["best_val_error"] = result.best_val_error;
    manifest["test_error"] = result.test_error;
    std::ofstream os(opt.manifest_out);
    if (!os) throw bnn::IoError("cannot open " + opt.manifest_out);
    os << manifest.dump(2) << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dataset,
             const std::string& data_dir, bool verify, int threads) {
    bnn::InferenceModel model = bnn::load_model(model_path);

    TrainOptions opt;
    opt.dataset = dataset;
    opt.data_dir = data_dir;
    LoadedData data = load_dataset(opt);
    const bnn::Dataset& eval_set = data.test;
    if (eval_set.n == 0) {
        std::cout << "samples 0\naccuracy n/a\n";
        return 0;
    }

    auto packed_preds = bnn::infer_predict(model, eval_set, 1024, threads);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval_set.n; ++i) {
        if (packed_preds[i] == eval_set.labels[i]) ++correct;
    }
    std::cout << "samples " << eval_set.n << "\n";
    std::cout << "accuracy " << static_cast<double>(correct) / static_cast<double>(eval_set.n)
              << "\n";

    if (verify) {
        // Reference path: unpacked weights through the float kernel.
        bnn::NetworkConfig cfg;
        cfg.layer_sizes.push_back(model.layers.front().fan_in);
        for (const auto& layer : model.layers) cfg.layer_sizes.push_back(layer.fan_out);
        cfg.bn_variant = model.bn_variant;
        cfg.threads = threads;
        bnn::Network ref = bnn::Network::init(cfg);
        for (std::size_t k = 0; k < model.layers.size(); ++k) {
            ref.layers()[k].w_real = bnn::transpose(bnn::unpack(model.layers[k].w_t));
            ref.layers()[k].bn = model.layers[k].bn;
        }
        auto ref_preds = ref.predict(eval_set);
        std::size_t agree = 0;
        for (std::size_t i = 0; i < eval_set.n; ++i) {
            if (ref_preds[i] == packed_preds[i]) ++agree;
        }
        std::cout << "path_agreement " << agree << "/" << eval_set.n << "\n";
    }
    return 0;
}

int cmd_bench(const std::string& sizes_csv, const std::string& kernels_csv, int threads,
              std::uint64_t seed, const std::string& out_path) {
    std::vector<std::array<std::size_t, 3>> sizes;
    {
        std::stringstream ss(sizes_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            std::array<std::size_t, 3> mnk;
            if (item.find(':') != std::string::npos) {
                std::stringstream ts(item);
                std::string part;
                for (std::size_t d = 0; d < 3 && std::getline(ts, part, ':'); ++d) {
                    mnk[d] = std::stoull(part);
                }
            } else {
                mnk.fill(std::stoull(item));  // cube
            }
            sizes.push_back(mnk);
        }
    }
    std::vector<bnn::GemmKernel> kernels;
    {
        std::stringstream ss(kernels_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item == "baseline") kernels.push_back(bnn::GemmKernel::Baseline);
            if (item == "xnor") kernels.push_back(bnn::GemmKernel::Xnor);
        }
    }

    auto reports = bnn::bench_gemm(sizes, kernels, threads, seed);
    for (const auto& r : reports) {
        if (!r.ok) std::cerr << r.kernel << " " << r.m << "x" << r.n << "x" << r.k << ": " << r.error << "\n";
    }

    // Base CSV plus a derived speedup column (baseline_time / xnor_time per
    // size, on rows that have both kernels).
    std::ostringstream os;
    os << "kernel,m,n,k,threads,wall_time_s,gops,checksum,speedup_vs_baseline\n";
    os.precision(9);
    for (const auto& r : reports) {
        if (!r.ok) continue;
        double speedup = 0.0;
        for (const auto& other : reports) {
            if (other.ok && other.kernel == "baseline" && other.m == r.m && other.n == r.n &&
                other.k == r.k) {
                speedup = other.wall_time_s / r.wall_time_s;
            }
        }
        os << r.kernel << ',' << r.m << ',' << r.n << ',' << r.k << ',' << r.threads << ','
           << r.wall_time_s << ',' << r.effective_gops << ',' << r.checksum << ',' << speedup
           << '\n';
    }
    write_output(os.str(), out_path);
    return 0;
}

int cmd_analyze(const std::string& bank_path, bool inverse_as_same, const std::string& out_path) {
    bnn::FilterBank bank = bnn::load_filter_bank(bank_path);
    bnn::FilterStats plain = bnn::unique_filters(bank, false);
    bnn::FilterStats inv = bnn::unique_filters(bank, true);

    json report;
    report["num_filters"] = bank.num_filters;
    report["channels"] = bank.channels;
    report["filter_size"] = bank.k;
    report["total_slices"] = plain.total_slices;
    report["unique"] = plain.unique_count;
    report["fraction_unique"] = plain.fraction_unique;
    report["unique_with_inversion"] = inv.unique_count;
    report["fraction_unique_with_inversion"] = inv.fraction_unique;
    report["xnor_reduction_factor"] = bnn::xnor_reduction_factor(bank);
    const bnn::FilterStats& chosen = inverse_as_same ? inv : plain;
    json hist = json::object();
    for (const auto& [mult, count] : chosen.multiplicity_histogram) {
        hist[std::to_string(mult)] = count;
    }
    report["multiplicity_histogram"] = hist;
    write_output(report.dump(2) + "\n", out_path);
    return 0;
}

int cmd_energy(const std::string& layers_csv, const std::string& precision,
               const std::string& dram, const std::string& out_path) {
    auto layers = parse_layer_list(layers_csv);
    bnn::EnergyTable table;
    if (dram == "low") table.mem_dram = 1300.0;
    if (dram == "high") table.mem_dram = 2600.0;

    auto to_json = [](const bnn::EnergyReport& r) {
        return json{{"macs", r.macs},
                    {"memory_bits", r.memory_bits},
                    {"memory_bytes", r.memory_bytes},
                    {"accesses_64bit", r.accesses},
                    {"arithmetic_pJ", r.arithmetic_pj},
                    {"memory_pJ", r.memory_pj},
                    {"pJ_per_access", r.access_pj}};
    };

    json report;
    report["layers"] = layers;
    if (precision == "fp32" || precision == "both") {
        report["fp32"] = to_json(bnn::energy_estimate(layers, bnn::Precision::Fp32, table));
    }
    if (precision == "bnn" || precision == "both") {
        report["bnn"] = to_json(bnn::energy_estimate(layers, bnn::Precision::Bnn, table));
    }
    if (precision == "both") {
        auto fp = bnn::energy_estimate(layers, bnn::Precision::Fp32, table);
        auto bn = bnn::energy_estimate(layers, bnn::Precision::Bnn, table);
        json ratios;
        ratios["memory_bytes"] = bn.memory_bytes > 0 ? fp.memory_bytes / bn.memory_bytes : 0.0;
        ratios["arithmetic_pJ"] = bn.arithmetic_pj > 0 ? fp.arithmetic_pj / bn.arithmetic_pj : 0.0;
        ratios["memory_pJ"] = bn.memory_pj > 0 ? fp.memory_pj / bn.memory_pj : 0.0;
        report["fp32_over_bnn"] = ratios;
    }
    write_output(report.dump(2) + "\n", out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binarized neural network engine"};
    app.require_subcommand(1);
    app.fallthrough();

    int threads = 0;
    if (const char* env = std::getenv("BNN_THREADS")) threads = std::atoi(env);
    app.add_option("--threads", threads, "Worker threads for the matrix kernels (0 = auto)")
        ->envname("BNN_THREADS");

    // train
    TrainOptions topt;
    std::string from_manifest, config_path;
    auto* train_cmd = app.add_subcommand("train", "Train a binarized network");
    train_cmd->add_option("--config", config_path, "Flat key=value config file; flags override");
    train_cmd->add_option("--dataset", topt.dataset, "mnist | parity | blobs");
    train_cmd->add_option("--layers", topt.layers, "Comma-separated layer sizes");
    train_cmd->add_option("--epochs", topt.epochs);
    train_cmd->add_option("--batch", topt.batch);
    train_cmd->add_option("--lr", topt.lr, "Initial global learning rate");
    train_cmd->add_option("--schedule", topt.schedule, "exp | shift");
    train_cmd->add_option("--decay", topt.decay, "Exponential decay factor per period");
    train_cmd->add_option("--period", topt.period, "Epochs per decay step");
    train_cmd->add_option("--binarize", topt.binarize, "det | stoch (activations)");
    train_cmd->add_option("--bn", topt.bn, "vanilla | shift");
    train_cmd->add_option("--optimizer", topt.optimizer, "adam | shift-adamax");
    train_cmd->add_option("--dropout", topt.dropout);
    train_cmd->add_option("--seed", topt.seed);
    train_cmd->add_option("--synthetic-n", topt.synthetic_n, "Sample count for synthetic sets");
    train_cmd->add_option("--data-dir", topt.data_dir, "MNIST directory")->envname("BNN_DATA_DIR");
    train_cmd->add_option("--out", topt.model_out, "Model output path");
    train_cmd->add_option("--manifest", topt.manifest_out, "Manifest output path");
    train_cmd->add_option("--from-manifest", from_manifest,
                          "Rerun the configuration recorded in a manifest");

    // eval
    std::string eval_model, eval_dataset = "mnist", eval_data_dir;
    bool eval_verify = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model");
    eval_cmd->add_option("--model", eval_model, "Model file (.bnnm)")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "mnist | parity | blobs (test split)");
    eval_cmd->add_option("--data-dir", eval_data_dir)->envname("BNN_DATA_DIR");
    eval_cmd->add_flag("--verify", eval_verify,
                       "Also run the float reference path and report agreement");

    // bench-gemm
    std::string bench_sizes = "1024,2048,4096", bench_kernels = "baseline,xnor", bench_out;
    std::uint64_t bench_seed = 42;
    auto* bench_cmd = app.add_subcommand("bench-gemm", "Time the float and XNOR kernels");
    bench_cmd->add_option("--sizes", bench_sizes, "Cubes (n) or m:n:k triples, comma-separated");
    bench_cmd->add_option("--kernels", bench_kernels, "Subset of baseline,xnor");
    bench_cmd->add_option("--seed", bench_seed);
    bench_cmd->add_option("--out", bench_out, "CSV output path (default stdout)");

    // analyze-filters
    std::string bank_path, analyze_out;
    bool inverse_as_same = true;
    auto* analyze_cmd = app.add_subcommand("analyze-filters", "Binary filter repetition stats");
    analyze_cmd->add_option("--bank", bank_path, "Filter bank (.bnnb)")->required();
    analyze_cmd->add_flag("--inverse,!--no-inverse", inverse_as_same,
                          "Histogram counts f and -f as one filter");
    analyze_cmd->add_option("--out", analyze_out, "JSON output path (default stdout)");

    // estimate-energy
    std::string energy_layers = "784,512,512,10", energy_precision = "both", energy_dram = "mid",
                energy_out;
    auto* energy_cmd = app.add_subcommand("estimate-energy", "Forward-pass energy model");
    energy_cmd->add_option("--layers", energy_layers, "Comma-separated layer sizes");
    energy_cmd->add_option("--precision", energy_precision, "fp32 | bnn | both");
    energy_cmd->add_option("--dram", energy_dram, "low | mid | high DRAM energy");
    energy_cmd->add_option("--out", energy_out, "JSON output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            if (!config_path.empty()) apply_config_file(config_path, train_cmd, topt);
            if (!from_manifest.empty()) apply_manifest(from_manifest, topt);
            topt.threads = threads;
            return cmd_train(topt);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_model, eval_dataset, eval_data_dir, eval_verify, threads);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(bench_sizes, bench_kernels, threads, bench_seed, bench_out);
        }
        if (analyze_cmd->parsed()) {
            return cmd_analyze(bank_path, inverse_as_same, analyze_out);
        }
        if (energy_cmd->parsed()) {
            return cmd_energy(energy_layers, energy_precision, energy_dram, energy_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
