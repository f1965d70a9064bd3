#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "bnn/errors.hpp"

namespace bnn {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1. Values are
// immutable once handed to the algorithms; mutation requires exclusive access.
class RealTensor {
public:
    RealTensor() = default;
    RealTensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static RealTensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    bool same_shape(const RealTensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Row-major +-1 matrix packed one bit per element into 64-bit words.
// Bit b = 1 encodes +1, bit b = 0 encodes -1. Padding bits past `cols` in the
// last word of each row are always zero; every operation preserves this.
class BitMatrix {
public:
    static constexpr std::size_t kWordBits = 64;

    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows),
          cols_(cols),
          words_per_row_((cols + kWordBits - 1) / kWordBits),
          words_(rows * words_per_row_, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t words_per_row() const { return words_per_row_; }
    std::size_t pad_bits() const { return words_per_row_ * kWordBits - cols_; }

    std::span<const std::uint64_t> row_words(std::size_t i) const {
        return {words_.data() + i * words_per_row_, words_per_row_};
    }
    std::span<std::uint64_t> row_words(std::size_t i) {
        return {words_.data() + i * words_per_row_, words_per_row_};
    }
    const std::vector<std::uint64_t>& words() const { return words_; }
    std::vector<std::uint64_t>& words() { return words_; }

    bool bit(std::size_t i, std::size_t j) const {
        return (words_[i * words_per_row_ + j / kWordBits] >> (j % kWordBits)) & 1u;
    }
    void set_bit(std::size_t i, std::size_t j, bool value) {
        std::uint64_t& w = words_[i * words_per_row_ + j / kWordBits];
        std::uint64_t mask = std::uint64_t{1} << (j % kWordBits);
        w = value ? (w | mask) : (w & ~mask);
    }

    // Mask of valid bits in the last word of a row (all-ones when cols
    // divides the word size or the matrix is empty).
    std::uint64_t last_word_mask() const {
        std::size_t rem = cols_ % kWordBits;
        return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> words_;
};

// Packs a +-1 tensor one bit per element. Throws ElementNotBinary if any
// element is not exactly -1 or +1.
BitMatrix pack(const RealTensor& m);

// Exact inverse of pack.
RealTensor unpack(const BitMatrix& b);

// Plain blocked matrix product, the float correctness oracle and speed
// baseline for the packed kernels. threads = 0 resolves to BNN_THREADS or
// the hardware count; output is bit-identical for any thread count.
RealTensor real_gemm(const RealTensor& a, const RealTensor& b, int threads = 0);

// Explicit-copy transpose (no strided views).
RealTensor transpose(const RealTensor& m);

int resolve_threads(int requested);

// "BNNT" container: magic, version u16, dtype tag u8, rows u64, cols u64,
// little-endian, then the raw payload (f64 array or u64 word array).
void save_tensor(const std::filesystem::path& path, const RealTensor& t);
RealTensor load_tensor(const std::filesystem::path& path);
void save_bitmatrix(const std::filesystem::path& path, const BitMatrix& b);
BitMatrix load_bitmatrix(const std::filesystem::path& path);

void write_tensor(std::ostream& os, const RealTensor& t);
RealTensor read_tensor(std::istream& is);
void write_bitmatrix(std::ostream& os, const BitMatrix& b);
BitMatrix read_bitmatrix(std::istream& is);

}  // namespace bnn
