#include "bnn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

namespace bnn {

static_assert(std::endian::native == std::endian::little,
              "BNNT/BNNM serialization assumes a little-endian host");

RealTensor RealTensor::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ShapeMismatch("from_data: " + std::to_string(data.size()) + " values for " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    }
    RealTensor t;
    t.rows_ = rows;
    t.cols_ = cols;
    t.data_ = std::move(data);
    return t;
}

bool RealTensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

BitMatrix pack(const RealTensor& m) {
    BitMatrix b(m.rows(), m.cols());
    const std::size_t wpr = b.words_per_row();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.data() + i * m.cols();
        std::uint64_t* dst = b.words().data() + i * wpr;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double v = src[j];
            if (v == 1.0) {
                dst[j / 64] |= std::uint64_t{1} << (j % 64);
            } else if (v != -1.0) {
                throw ElementNotBinary("pack: element (" + std::to_string(i) + "," +
                                       std::to_string(j) + ") = " + std::to_string(v));
            }
        }
    }
    return b;
}

RealTensor unpack(const BitMatrix& b) {
    RealTensor m(b.rows(), b.cols());
    for (std::size_t i = 0; i < b.rows(); ++i) {
        auto words = b.row_words(i);
        double* dst = m.data() + i * m.cols();
        for (std::size_t j = 0; j < b.cols(); ++j) {
            dst[j] = ((words[j / 64] >> (j % 64)) & 1u) ? 1.0 : -1.0;
        }
    }
    return m;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BNN_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

// Row-panel worker: C[i0:i1) += A[i0:i1) * B. k is traversed in ascending
// blocks so each output element accumulates in a fixed order regardless of
// how rows are split across threads.
void gemm_rows(const RealTensor& a, const RealTensor& b, RealTensor& c, std::size_t i0,
               std::size_t i1) {
    constexpr std::size_t kBlock = 256;
    const std::size_t n = b.cols();
    const std::size_t k = a.cols();
    for (std::size_t kb = 0; kb < k; kb += kBlock) {
        const std::size_t kEnd = std::min(kb + kBlock, k);
        for (std::size_t i = i0; i < i1; ++i) {
            const double* arow = a.data() + i * k;
            double* crow = c.data() + i * n;
            for (std::size_t kk = kb; kk < kEnd; ++kk) {
                const double av = arow[kk];
                const double* brow = b.data() + kk * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    }
}

template <typename Fn>
void parallel_rows(std::size_t rows, int threads, Fn&& fn) {
    int nt = resolve_threads(threads);
    if (rows == 0) return;
    nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(nt), rows));
    if (nt <= 1) {
        fn(std::size_t{0}, rows);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    const std::size_t chunk = (rows + static_cast<std::size_t>(nt) - 1) / static_cast<std::size_t>(nt);
    for (int t = 0; t < nt; ++t) {
        std::size_t i0 = static_cast<std::size_t>(t) * chunk;
        std::size_t i1 = std::min(i0 + chunk, rows);
        if (i0 >= i1) break;
        pool.emplace_back([&fn, i0, i1] { fn(i0, i1); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

RealTensor real_gemm(const RealTensor& a, const RealTensor& b, int threads) {
    if (a.cols() != b.rows()) {
        throw ShapeMismatch("real_gemm: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
    }
    RealTensor c(a.rows(), b.cols());
    parallel_rows(a.rows(), threads,
                  [&](std::size_t i0, std::size_t i1) { gemm_rows(a, b, c, i0, i1); });
    return c;
}

RealTensor transpose(const RealTensor& m) {
    RealTensor t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

namespace {

constexpr char kTensorMagic[4] = {'B', 'N', 'N', 'T'};
constexpr std::uint16_t kTensorVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeBits = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw TruncatedFile("unexpected end of stream");
    return v;
}

std::uint8_t read_header(std::istream& is, std::uint64_t& rows, std::uint64_t& cols) {
    char magic[4];
    is.read(magic, 4);
    if (!is) throw TruncatedFile("missing BNNT header");
    if (std::memcmp(magic, kTensorMagic, 4) != 0) throw BadMagic("not a BNNT stream");
    auto version = read_pod<std::uint16_t>(is);
    if (version != kTensorVersion) {
        throw BadMagic("unsupported BNNT version " + std::to_string(version));
    }
    auto dtype = read_pod<std::uint8_t>(is);
    rows = read_pod<std::uint64_t>(is);
    cols = read_pod<std::uint64_t>(is);
    return dtype;
}

void write_header(std::ostream& os, std::uint8_t dtype, std::uint64_t rows, std::uint64_t cols) {
    os.write(kTensorMagic, 4);
    write_pod(os, kTensorVersion);
    write_pod(os, dtype);
    write_pod(os, rows);
    write_pod(os, cols);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    return is;
}

}  // namespace

void write_tensor(std::ostream& os, const RealTensor& t) {
    write_header(os, kDtypeF64, t.rows(), t.cols());
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}

RealTensor read_tensor(std::istream& is) {
    std::uint64_t rows, cols;
    if (read_header(is, rows, cols) != kDtypeF64) throw BadMagic("expected f64 payload");
    std::vector<double> data(rows * cols);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw TruncatedFile("tensor payload short");
    return RealTensor::from_data(rows, cols, std::move(data));
}

void write_bitmatrix(std::ostream& os, const BitMatrix& b) {
    write_header(os, kDtypeBits, b.rows(), b.cols());
    os.write(reinterpret_cast<const char*>(b.words().data()),
             static_cast<std::streamsize>(b.words().size() * sizeof(std::uint64_t)));
}

BitMatrix read_bitmatrix(std::istream& is) {
    std::uint64_t rows, cols;
    if (read_header(is, rows, cols) != kDtypeBits) throw BadMagic("expected packed payload");
    BitMatrix b(rows, cols);
    is.read(reinterpret_cast<char*>(b.words().data()),
            static_cast<std::streamsize>(b.words().size() * sizeof(std::uint64_t)));
    if (!is) throw TruncatedFile("bit matrix payload short");
    const std::uint64_t mask = b.last_word_mask();
    for (std::size_t i = 0; i < b.rows(); ++i) {
        auto words = b.row_words(i);
        if (!words.empty() && (words.back() & ~mask) != 0) {
            throw CorruptModel("nonzero padding bits in packed row " + std::to_string(i));
        }
    }
    return b;
}

void save_tensor(const std::filesystem::path& path, const RealTensor& t) {
    auto os = open_out(path);
    write_tensor(os, t);
}

RealTensor load_tensor(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_tensor(is);
}

void save_bitmatrix(const std::filesystem::path& path, const BitMatrix& b) {
    auto os = open_out(path);
    write_bitmatrix(os, b);
}

BitMatrix load_bitmatrix(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_bitmatrix(is);
}

}  // namespace bnn
