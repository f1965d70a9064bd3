#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

// Signed +-1 dot product of two packed rows with n valid bits:
//   dot = 2 * (popcount(xnor) - pad_bits) - n
// Zero-padded tails XNOR to all-ones, so the spurious matches in the pad
// region are subtracted before converting matches to a signed sum.
std::int64_t xnor_dot(std::span<const std::uint64_t> a_row, std::span<const std::uint64_t> w_row,
                      std::size_t n);

// out[i][j] = xnor_dot(row i of a, row j of w_t, k). Weights arrive
// pre-transposed (n x k) so both operands stream row-wise. Bit-exact against
// real_gemm on the unpacked operands; deterministic for any thread count.
RealTensor xnor_gemm(const BitMatrix& a, const BitMatrix& w_t, int threads = 0);

// Exact integer product x * w^T for 8-bit fixed-point inputs (entries are
// integers in [0,255]) against +-1 weights, computed bit-plane by bit-plane
// with two masked popcounts per plane.
RealTensor fixed_point_first_layer(const RealTensor& x, const BitMatrix& w_t, int threads = 0);

struct GemmReport {
    std::string kernel;
    std::size_t m = 0, n = 0, k = 0;
    int threads = 1;
    double wall_time_s = 0.0;
    double effective_gops = 0.0;  // 2*m*n*k / wall_time / 1e9
    double checksum = 0.0;        // sum of all output entries
    bool ok = true;
    std::string error;
};

enum class GemmKernel { Baseline, Xnor };

// Times each requested kernel on random +-1 operands generated from `seed`.
// Allocation failures are reported per entry (ok = false), not thrown.
std::vector<GemmReport> bench_gemm(std::span<const std::array<std::size_t, 3>> sizes,
                                   std::span<const GemmKernel> kernels, int threads,
                                   std::uint64_t seed = 42);

// CSV with header kernel,m,n,k,threads,wall_time_s,gops,checksum
// (failed entries are skipped; callers may report report.error separately).
std::string gemm_report_csv(std::span<const GemmReport> reports);

}  // namespace bnn
