#include "bnn/bitops.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <new>
#include <sstream>
#include <thread>

#include "bnn/rng.hpp"

namespace bnn {

namespace {

// Panel sizes for the packed kernel: a w_t panel of 64 rows at k = 4096 is
// 32 KiB of words, one L1's worth, and each a-row is reused across the whole
// panel. Chosen empirically on a 64-bit popcount machine.
constexpr std::size_t kRowPanel = 8;
constexpr std::size_t kColPanel = 64;

inline std::int64_t matches(std::span<const std::uint64_t> a, std::span<const std::uint64_t> w) {
    std::size_t nw = a.size();
    std::int64_t c0 = 0, c1 = 0, c2 = 0, c3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= nw; i += 4) {
        c0 += std::popcount(~(a[i] ^ w[i]));
        c1 += std::popcount(~(a[i + 1] ^ w[i + 1]));
        c2 += std::popcount(~(a[i + 2] ^ w[i + 2]));
        c3 += std::popcount(~(a[i + 3] ^ w[i + 3]));
    }
    for (; i < nw; ++i) {
        c0 += std::popcount(~(a[i] ^ w[i]));
    }
    return c0 + c1 + c2 + c3;
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

std::int64_t xnor_dot(std::span<const std::uint64_t> a_row, std::span<const std::uint64_t> w_row,
                      std::size_t n) {
    const std::size_t words = (n + 63) / 64;
    if (a_row.size() != words || w_row.size() != words) {
        throw LengthMismatch("xnor_dot: expected " + std::to_string(words) + " words, got " +
                             std::to_string(a_row.size()) + " and " +
                             std::to_string(w_row.size()));
    }
    const std::int64_t pad = static_cast<std::int64_t>(words * 64 - n);
    return 2 * (matches(a_row, w_row) - pad) - static_cast<std::int64_t>(n);
}

RealTensor xnor_gemm(const BitMatrix& a, const BitMatrix& w_t, int threads) {
    if (a.cols() != w_t.cols()) {
        throw ShapeMismatch("xnor_gemm: inner dimensions " + std::to_string(a.cols()) + " vs " +
                            std::to_string(w_t.cols()));
    }
    const std::size_t m = a.rows();
    const std::size_t n = w_t.rows();
    const std::size_t k = a.cols();
    const std::int64_t pad = static_cast<std::int64_t>(a.pad_bits());
    RealTensor out(m, n);

    parallel_rows(m, threads, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t ip = i0; ip < i1; ip += kRowPanel) {
            const std::size_t iEnd = std::min(ip + kRowPanel, i1);
            for (std::size_t jp = 0; jp < n; jp += kColPanel) {
                const std::size_t jEnd = std::min(jp + kColPanel, n);
                for (std::size_t i = ip; i < iEnd; ++i) {
                    auto arow = a.row_words(i);
                    double* orow = out.data() + i * n;
                    for (std::size_t j = jp; j < jEnd; ++j) {
                        std::int64_t dot =
                            2 * (matches(arow, w_t.row_words(j)) - pad) - static_cast<std::int64_t>(k);
                        orow[j] = static_cast<double>(dot);
                    }
                }
            }
        }
    });
    return out;
}

RealTensor fixed_point_first_layer(const RealTensor& x, const BitMatrix& w_t, int threads) {
    if (x.cols() != w_t.cols()) {
        throw ShapeMismatch("fixed_point_first_layer: inner dimensions " +
                            std::to_string(x.cols()) + " vs " + std::to_string(w_t.cols()));
    }
    const std::size_t m = x.rows();
    const std::size_t n = w_t.rows();
    const std::size_t d = x.cols();
    const std::size_t wpr = w_t.words_per_row();

    // Plane masks: w_plus has a 1 where the weight is +1; w_minus where it is
    // -1, restricted to valid columns so pad bits never count.
    std::vector<std::uint64_t> w_minus(w_t.words().size());
    const std::uint64_t tail = w_t.last_word_mask();
    for (std::size_t j = 0; j < n; ++j) {
        auto row = w_t.row_words(j);
        for (std::size_t w = 0; w < wpr; ++w) {
            std::uint64_t valid = (w + 1 == wpr) ? tail : ~std::uint64_t{0};
            w_minus[j * wpr + w] = ~row[w] & valid;
        }
    }

    // Bit planes of the inputs, one BitMatrix per significance level.
    std::array<BitMatrix, 8> planes;
    for (auto& p : planes) p = BitMatrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            double v = row[j];
            if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
                throw InputOutOfRange("fixed_point_first_layer: element (" + std::to_string(i) +
                                      "," + std::to_string(j) + ") = " + std::to_string(v) +
                                      " is not an integer in [0,255]");
            }
            auto bits = static_cast<std::uint32_t>(v);
            for (std::size_t b = 0; b < 8; ++b) {
                if ((bits >> b) & 1u) planes[b].set_bit(i, j, true);
            }
        }
    }

    RealTensor out(m, n);
    parallel_rows(m, threads, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            double* orow = out.data() + i * n;
            for (std::size_t b = 0; b < 8; ++b) {
                auto prow = planes[b].row_words(i);
                const double scale = static_cast<double>(std::uint64_t{1} << b);
                for (std::size_t j = 0; j < n; ++j) {
                    auto wrow = w_t.row_words(j);
                    const std::uint64_t* mrow = w_minus.data() + j * wpr;
                    std::int64_t plus = 0, minus = 0;
                    for (std::size_t w = 0; w < wpr; ++w) {
                        plus += std::popcount(prow[w] & wrow[w]);
                        minus += std::popcount(prow[w] & mrow[w]);
                    }
                    orow[j] += scale * static_cast<double>(plus - minus);
                }
            }
        }
    });
    return out;
}

namespace {

RealTensor random_pm1(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    RealTensor t(rows, cols);
    rng::SplitMix g(seed);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = (g.next() & 1u) ? 1.0 : -1.0;
    }
    return t;
}

double sum_entries(const RealTensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
    return s;
}

const char* kernel_name(GemmKernel k) {
    return k == GemmKernel::Baseline ? "baseline" : "xnor";
}

}  // namespace

std::vector<GemmReport> bench_gemm(std::span<const std::array<std::size_t, 3>> sizes,
                                   std::span<const GemmKernel> kernels, int threads,
                                   std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    std::vector<GemmReport> reports;
    const int nt = resolve_threads(threads);

    for (const auto& [m, n, k] : sizes) {
        for (GemmKernel kernel : kernels) {
            GemmReport rep;
            rep.kernel = kernel_name(kernel);
            rep.m = m;
            rep.n = n;
            rep.k = k;
            rep.threads = nt;
            try {
                RealTensor a = random_pm1(m, k, rng::mix({seed, m, k, 0xa}));
                RealTensor w = random_pm1(n, k, rng::mix({seed, n, k, 0xb}));
                if (kernel == GemmKernel::Baseline) {
                    RealTensor b = transpose(w);
                    auto t0 = clock::now();
                    RealTensor c = real_gemm(a, b, nt);
                    auto t1 = clock::now();
                    rep.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
                    rep.checksum = sum_entries(c);
                } else {
                    BitMatrix ap = pack(a);
                    BitMatrix wp = pack(w);
                    auto t0 = clock::now();
                    RealTensor c = xnor_gemm(ap, wp, nt);
                    auto t1 = clock::now();
                    rep.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
                    rep.checksum = sum_entries(c);
                }
                if (rep.wall_time_s <= 0.0) rep.wall_time_s = 1e-9;
                rep.effective_gops = 2.0 * static_cast<double>(m) * static_cast<double>(n) *
                                     static_cast<double>(k) / rep.wall_time_s / 1e9;
            } catch (const std::bad_alloc&) {
                rep.ok = false;
                rep.error = "out of memory";
            } catch (const std::length_error&) {
                rep.ok = false;
                rep.error = "out of memory";
            }
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

std::string gemm_report_csv(std::span<const GemmReport> reports) {
    std::ostringstream os;
    os << "kernel,m,n,k,threads,wall_time_s,gops,checksum\n";
    os.precision(9);
    for (const auto& r : reports) {
        if (!r.ok) continue;
        os << r.kernel << ',' << r.m << ',' << r.n << ',' << r.k << ',' << r.threads << ','
           << r.wall_time_s << ',' << r.effective_gops << ',' << r.checksum << '\n';
    }
    return os.str();
}

}  // namespace bnn
