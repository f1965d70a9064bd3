#include "bnn/data.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "bnn/rng.hpp"

namespace bnn {

double scale_u8(double pixel) {
    return (2.0 * pixel - 255.0) / 256.0;
}

RealTensor Dataset::scaled_batch(std::span<const std::size_t> indices) const {
    RealTensor out(indices.size(), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        if (raw_u8) {
            const std::uint8_t* src = raw.data() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                out(r, j) = scale_u8(static_cast<double>(src[j]));
            }
        } else {
            const double* src = real.data() + i * dim;
            std::memcpy(out.data() + r * dim, src, dim * sizeof(double));
        }
    }
    return out;
}

RealTensor Dataset::raw_batch(std::span<const std::size_t> indices) const {
    if (!raw_u8) {
        throw InputOutOfRange("raw_batch: dataset does not carry 8-bit pixels");
    }
    RealTensor out(indices.size(), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::uint8_t* src = raw.data() + indices[r] * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            out(r, j) = static_cast<double>(src[j]);
        }
    }
    return out;
}

std::vector<int> Dataset::label_batch(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) out[r] = labels[indices[r]];
    return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    Dataset out;
    out.n = end - begin;
    out.dim = dim;
    out.raw_u8 = raw_u8;
    out.num_classes = num_classes;
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    if (raw_u8) {
        out.raw.assign(raw.begin() + static_cast<std::ptrdiff_t>(begin * dim),
                       raw.begin() + static_cast<std::ptrdiff_t>(end * dim));
    } else {
        out.real = RealTensor(out.n, dim);
        std::memcpy(out.real.data(), real.data() + begin * dim, out.n * dim * sizeof(double));
    }
    return out;
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Reads a whole file through zlib's gz layer, which passes uncompressed
// bytes through unchanged.
std::vector<std::uint8_t> read_file_maybe_gz(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) {
        out.insert(out.end(), buf, buf + got);
    }
    bool failed = got < 0;
    gzclose(f);
    if (failed) {
        throw IoError("read error on " + path.string());
    }
    return out;
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes,
                bool gzip_compress) {
    if (gzip_compress) {
        gzFile f = gzopen(path.string().c_str(), "wb");
        if (f == nullptr) throw IoError("cannot open " + path.string());
        int wrote = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(f);
        if (wrote != static_cast<int>(bytes.size())) throw IoError("short write: " + path.string());
    } else {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path.string());
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("short write: " + path.string());
    }
}

}  // namespace

IdxImages load_idx_images(const std::filesystem::path& path) {
    auto bytes = read_file_maybe_gz(path);
    if (bytes.size() < 4) throw TruncatedFile("IDX image header short: " + path.string());
    std::uint32_t magic = be32(bytes.data());
    if (magic != kImageMagic) {
        throw BadMagic("IDX image magic 0x" + std::to_string(magic) + " in " + path.string());
    }
    if (bytes.size() < 16) throw TruncatedFile("IDX image header short: " + path.string());
    IdxImages im;
    im.count = be32(bytes.data() + 4);
    im.rows = be32(bytes.data() + 8);
    im.cols = be32(bytes.data() + 12);
    const std::size_t expected = im.count * im.rows * im.cols;
    if (bytes.size() - 16 < expected) {
        throw TruncatedFile("IDX image payload short: " + path.string());
    }
    im.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
    return im;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
    auto bytes = read_file_maybe_gz(path);
    if (bytes.size() < 4) throw TruncatedFile("IDX label header short: " + path.string());
    std::uint32_t magic = be32(bytes.data());
    if (magic != kLabelMagic) {
        throw BadMagic("IDX label magic 0x" + std::to_string(magic) + " in " + path.string());
    }
    if (bytes.size() < 8) throw TruncatedFile("IDX label header short: " + path.string());
    const std::size_t count = be32(bytes.data() + 4);
    if (bytes.size() - 8 < count) throw TruncatedFile("IDX label payload short: " + path.string());
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint8_t b = bytes[8 + i];
        if (b > 9) {
            throw LabelOutOfRange("label " + std::to_string(int(b)) + " at index " +
                                  std::to_string(i));
        }
        labels[i] = b;
    }
    return labels;
}

void save_idx_images(const std::filesystem::path& path, const IdxImages& images,
                     bool gzip_compress) {
    if (images.pixels.size() != images.count * images.rows * images.cols) {
        throw DimMismatch("save_idx_images: pixel buffer does not match dims");
    }
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + images.pixels.size());
    put_be32(bytes, kImageMagic);
    put_be32(bytes, static_cast<std::uint32_t>(images.count));
    put_be32(bytes, static_cast<std::uint32_t>(images.rows));
    put_be32(bytes, static_cast<std::uint32_t>(images.cols));
    bytes.insert(bytes.end(), images.pixels.begin(), images.pixels.end());
    write_file(path, bytes, gzip_compress);
}

void save_idx_labels(const std::filesystem::path& path, std::span<const int> labels,
                     bool gzip_compress) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + labels.size());
    put_be32(bytes, kLabelMagic);
    put_be32(bytes, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        if (l < 0 || l > 9) throw LabelOutOfRange("label " + std::to_string(l));
        bytes.push_back(static_cast<std::uint8_t>(l));
    }
    write_file(path, bytes, gzip_compress);
}

namespace {

Dataset make_parity(std::size_t n) {
    // 2-bit XOR truth table in +-1 encoding, cycled.
    static constexpr double kInputs[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    static constexpr int kLabels[4] = {0, 1, 1, 0};
    Dataset d;
    d.n = n;
    d.dim = 2;
    d.raw_u8 = false;
    d.num_classes = 2;
    d.real = RealTensor(n, 2);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.real(i, 0) = kInputs[i % 4][0];
        d.real(i, 1) = kInputs[i % 4][1];
        d.labels[i] = kLabels[i % 4];
    }
    return d;
}

Dataset make_blobs(std::size_t n, std::uint64_t seed) {
    constexpr std::size_t kDim = 16;
    constexpr double kSigma = 9.6;
    constexpr double kCenters[2] = {80.0, 176.0};  // 10 sigma apart per axis
    Dataset d;
    d.n = n;
    d.dim = kDim;
    d.raw_u8 = true;
    d.num_classes = 2;
    d.raw.resize(n * kDim);
    d.labels.resize(n);
    rng::SplitMix g(rng::mix({seed, 0x670b5}));
    for (std::size_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(g.next() & 1u);
        d.labels[i] = cls;
        for (std::size_t j = 0; j < kDim; ++j) {
            // Box-Muller from two seeded uniforms.
            double u1 = std::max(g.next_unit(), 1e-12);
            double u2 = g.next_unit();
            constexpr double kTwoPi = 6.283185307179586;
            double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
            double v = std::round(kCenters[cls] + kSigma * z);
            d.raw[i * kDim + j] = static_cast<std::uint8_t>(std::max(0.0, std::min(255.0, v)));
        }
    }
    return d;
}

}  // namespace

Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed) {
    switch (kind) {
        case SyntheticKind::Parity:
            return make_parity(n);
        case SyntheticKind::GaussianBlobs:
            return make_blobs(n, seed);
    }
    throw Error("make_synthetic: unknown kind");
}

namespace {

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
    for (const char* suffix : {"", ".gz"}) {
        auto p = dir / (stem + suffix);
        if (std::filesystem::exists(p)) return p;
    }
    throw IoError("missing " + (dir / stem).string() + "[.gz]");
}

Dataset to_dataset(IdxImages&& im, std::vector<int>&& labels) {
    if (im.count != labels.size()) {
        throw DimMismatch("image count " + std::to_string(im.count) + " != label count " +
                          std::to_string(labels.size()));
    }
    Dataset d;
    d.n = im.count;
    d.dim = im.rows * im.cols;
    d.raw_u8 = true;
    d.num_classes = 10;
    d.raw = std::move(im.pixels);
    d.labels = std::move(labels);
    return d;
}

}  // namespace

MnistSplits load_mnist(const std::filesystem::path& dir) {
    auto train_images = load_idx_images(find_idx(dir, "train-images-idx3-ubyte"));
    auto train_labels = load_idx_labels(find_idx(dir, "train-labels-idx1-ubyte"));
    auto test_images = load_idx_images(find_idx(dir, "t10k-images-idx3-ubyte"));
    auto test_labels = load_idx_labels(find_idx(dir, "t10k-labels-idx1-ubyte"));
    if (train_images.rows != 28 || train_images.cols != 28 || test_images.rows != 28 ||
        test_images.cols != 28) {
        throw DimMismatch("MNIST images must be 28x28");
    }

    Dataset full = to_dataset(std::move(train_images), std::move(train_labels));
    if (full.n < 20000) throw DimMismatch("MNIST training file unexpectedly small");
    MnistSplits splits;
    const std::size_t val_start = full.n - 10000;  // last 10K as validation
    splits.train = full.slice(0, val_start);
    splits.val = full.slice(val_start, full.n);
    splits.test = to_dataset(std::move(test_images), std::move(test_labels));
    return splits;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("BNN_DATA_DIR")) {
        return env;
    }
    std::filesystem::path local = "data/mnist";
    if (std::filesystem::exists(local)) return local;
    if (const char* home = std::getenv("HOME")) {
        return std::filesystem::path(home) / "data" / "mnist";
    }
    return local;
}

}  // namespace bnn
