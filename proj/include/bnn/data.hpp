#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

// Labeled dataset with images either as raw 8-bit pixels or as already
// real-valued rows. Raw pixels are scaled per-batch so a 60K MNIST split
// stays at one byte per pixel in memory.
struct Dataset {
    std::size_t n = 0;
    std::size_t dim = 0;
    bool raw_u8 = true;
    std::vector<std::uint8_t> raw;  // n*dim when raw_u8
    RealTensor real;                // n x dim when !raw_u8
    std::vector<int> labels;        // class indices in [0, num_classes)
    std::size_t num_classes = 10;

    // Training-path input scaling: a = (2x - 255)/256, a dyadic rational in
    // (-1, 1) so +-1-weighted sums of scaled pixels are exact in doubles.
    RealTensor scaled_batch(std::span<const std::size_t> indices) const;
    // Raw integer pixels (requires raw_u8), for the fixed-point path.
    RealTensor raw_batch(std::span<const std::size_t> indices) const;
    std::vector<int> label_batch(std::span<const std::size_t> indices) const;
    Dataset slice(std::size_t begin, std::size_t end) const;
};

double scale_u8(double pixel);

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

// IDX readers; gzip-compressed files are accepted transparently.
IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

void save_idx_images(const std::filesystem::path& path, const IdxImages& images,
                     bool gzip_compress = false);
void save_idx_labels(const std::filesystem::path& path, std::span<const int> labels,
                     bool gzip_compress = false);

enum class SyntheticKind { Parity, GaussianBlobs };

// Deterministic fixture data. Parity: 2-bit XOR with +-1 inputs (n = 4
// enumerates the truth table; larger n cycles it). GaussianBlobs: two
// well-separated 8-bit blobs in 16 dimensions.
Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed);

struct MnistSplits {
    Dataset train;  // first 50K
    Dataset val;    // last 10K of the training file
    Dataset test;   // 10K test file
};

// Loads the four canonical IDX files (optionally .gz) from `dir` and applies
// the fixed train/validation split.
MnistSplits load_mnist(const std::filesystem::path& dir);

// BNN_DATA_DIR if set, else ./data/mnist if present, else ~/data/mnist.
std::filesystem::path default_data_dir();

}  // namespace bnn
