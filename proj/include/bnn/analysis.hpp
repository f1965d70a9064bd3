#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "bnn/errors.hpp"

namespace bnn {

// 4-D bank of binary convolution filters: num_filters x channels x k x k,
// entries +-1, one 2-D slice per (filter, channel) pair.
struct FilterBank {
    std::size_t num_filters = 0;  // M_l
    std::size_t channels = 0;     // M_{l-1}
    std::size_t k = 0;
    std::vector<std::int8_t> values;  // row-major, +-1

    std::size_t slice_count() const { return num_filters * channels; }
    std::size_t slice_size() const { return k * k; }
    std::span<const std::int8_t> slice(std::size_t index) const {
        return {values.data() + index * slice_size(), slice_size()};
    }
    void validate() const;
};

// "BNNB" container: magic, version u16, four u64 dims, int8 payload.
void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank);
FilterBank load_filter_bank(const std::filesystem::path& path);

FilterBank random_filter_bank(std::size_t num_filters, std::size_t channels, std::size_t k,
                              std::uint64_t seed);

struct FilterStats {
    std::size_t total_slices = 0;
    std::size_t unique_count = 0;
    double fraction_unique = 0.0;
    // multiplicity -> number of distinct filters occurring that many times
    std::map<std::size_t, std::size_t> multiplicity_histogram;
};

// Counts distinct k x k slices across the bank. With
// count_inverses_as_same, f and -f collapse to one class (canonical
// representative: the lexicographically smaller of the two).
FilterStats unique_filters(const FilterBank& bank, bool count_inverses_as_same);

// total_slices / unique_slices counting f ~ -f: the dedup factor a
// repetition-aware engine could claim.
double xnor_reduction_factor(const FilterBank& bank);

// Energy per operation in picojoules (45nm estimates) and per 64-bit memory
// access by memory size.
struct EnergyTable {
    double mul_int8 = 0.2, mul_int32 = 3.1, mul_fp16 = 1.1, mul_fp32 = 3.7;
    double add_int8 = 0.03, add_int32 = 0.1, add_fp16 = 0.4, add_fp32 = 0.9;
    double mem_8k = 10.0, mem_32k = 20.0, mem_1m = 100.0;
    double mem_dram = 1950.0;  // midpoint of the 1.3-2.6 nJ range
};

enum class Precision { Fp32, Bnn };

struct EnergyReport {
    std::size_t macs = 0;         // multiply-accumulates per forward pass
    std::size_t memory_bits = 0;  // weight storage, exact
    double memory_bytes = 0.0;    // memory_bits / 8
    double accesses = 0.0;        // 64-bit weight reads per forward pass
    double arithmetic_pj = 0.0;
    double memory_pj = 0.0;
    double access_pj = 0.0;  // per-access cost used (table row)
};

// Cost model for one forward pass of a fully connected network. fp32 charges
// a full float MAC per connection and 32-bit weights; bnn charges one
// int8-class add per 64 connections (the XNOR-popcount-accumulate proxy) and
// 1-bit weights, cutting memory accesses 32x. The per-access energy row is
// picked by the memory size class the weights fit in.
EnergyReport energy_estimate(std::span<const std::size_t> layer_sizes, Precision precision,
                             const EnergyTable& table = {});

}  // namespace bnn
