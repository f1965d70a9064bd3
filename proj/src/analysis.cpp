#include "bnn/analysis.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>

#include "bnn/rng.hpp"

namespace bnn {

void FilterBank::validate() const {
    if (k == 0) throw DimMismatch("filter bank: k must be >= 1");
    if (values.size() != num_filters * channels * k * k) {
        throw DimMismatch("filter bank: value count does not match dims");
    }
    for (std::int8_t v : values) {
        if (v != 1 && v != -1) throw ElementNotBinary("filter bank: entry must be +-1");
    }
}

namespace {

constexpr char kBankMagic[4] = {'B', 'N', 'N', 'B'};
constexpr std::uint16_t kBankVersion = 1;

// A slice as a string key: '+' for +1, '-' for -1 ('-' < '+' in ASCII, so
// lexicographic comparisons treat -1 as smaller).
std::string slice_key(std::span<const std::int8_t> slice) {
    std::string key(slice.size(), '-');
    for (std::size_t i = 0; i < slice.size(); ++i) {
        if (slice[i] > 0) key[i] = '+';
    }
    return key;
}

std::string negated_key(const std::string& key) {
    std::string neg = key;
    for (char& c : neg) c = (c == '+') ? '-' : '+';
    return neg;
}

}  // namespace

FilterStats unique_filters(const FilterBank& bank, bool count_inverses_as_same) {
    bank.validate();
    FilterStats stats;
    stats.total_slices = bank.slice_count();

    std::unordered_map<std::string, std::size_t> counts;
    counts.reserve(stats.total_slices * 2);
    for (std::size_t i = 0; i < stats.total_slices; ++i) {
        std::string key = slice_key(bank.slice(i));
        if (count_inverses_as_same) {
            std::string neg = negated_key(key);
            if (neg < key) key = std::move(neg);
        }
        ++counts[key];
    }
    stats.unique_count = counts.size();
    stats.fraction_unique = stats.total_slices == 0
                                ? 0.0
                                : static_cast<double>(stats.unique_count) /
                                      static_cast<double>(stats.total_slices);
    for (const auto& [key, count] : counts) {
        ++stats.multiplicity_histogram[count];
    }
    return stats;
}

double xnor_reduction_factor(const FilterBank& bank) {
    FilterStats stats = unique_filters(bank, /*count_inverses_as_same=*/true);
    if (stats.unique_count == 0) return 1.0;
    return static_cast<double>(stats.total_slices) / static_cast<double>(stats.unique_count);
}

void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank) {
    bank.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kBankMagic, 4);
    os.write(reinterpret_cast<const char*>(&kBankVersion), sizeof(kBankVersion));
    const std::uint64_t dims[4] = {bank.num_filters, bank.channels, bank.k, bank.k};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(bank.values.data()),
             static_cast<std::streamsize>(bank.values.size()));
    if (!os) throw IoError("short write: " + path.string());
}

FilterBank load_filter_bank(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kBankMagic, 4) != 0) {
        throw BadMagic("not a BNNB file: " + path.string());
    }
    std::uint16_t version;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!is || version != kBankVersion) throw BadMagic("unsupported BNNB version");
    std::uint64_t dims[4];
    is.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!is) throw TruncatedFile("BNNB header short");
    if (dims[2] != dims[3]) throw DimMismatch("BNNB: filters must be square");
    FilterBank bank;
    bank.num_filters = dims[0];
    bank.channels = dims[1];
    bank.k = dims[2];
    bank.values.resize(bank.num_filters * bank.channels * bank.k * bank.k);
    is.read(reinterpret_cast<char*>(bank.values.data()),
            static_cast<std::streamsize>(bank.values.size()));
    if (!is) throw TruncatedFile("BNNB payload short");
    bank.validate();
    return bank;
}

FilterBank random_filter_bank(std::size_t num_filters, std::size_t channels, std::size_t k,
                              std::uint64_t seed) {
    FilterBank bank;
    bank.num_filters = num_filters;
    bank.channels = channels;
    bank.k = k;
    bank.values.resize(num_filters * channels * k * k);
    rng::SplitMix g(rng::mix({seed, 0xf117e25}));
    for (auto& v : bank.values) {
        v = (g.next() & 1u) ? 1 : -1;
    }
    return bank;
}

EnergyReport energy_estimate(std::span<const std::size_t> layer_sizes, Precision precision,
                             const EnergyTable& table) {
    EnergyReport report;
    if (layer_sizes.size() < 2) return report;  // empty network: all zero

    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        report.macs += layer_sizes[k] * layer_sizes[k + 1];
    }
    const double macs = static_cast<double>(report.macs);

    switch (precision) {
        case Precision::Fp32:
            report.arithmetic_pj = macs * (table.mul_fp32 + table.add_fp32);
            report.memory_bits = report.macs * 32;
            report.accesses = macs * 32.0 / 64.0;
            break;
        case Precision::Bnn:
            // One XNOR+popcount+accumulate covers 64 connections; costed as a
            // single int8-class add (a stated modeling proxy, not a measured
            // figure).
            report.arithmetic_pj = macs / 64.0 * table.add_int8;
            report.memory_bits = report.macs;
            report.accesses = macs * 1.0 / 64.0;
            break;
        default:
            throw UnknownPrecision("energy_estimate: unknown precision");
    }
    report.memory_bytes = static_cast<double>(report.memory_bits) / 8.0;

    const double bytes = report.memory_bytes;
    if (bytes <= 8.0 * 1024.0) {
        report.access_pj = table.mem_8k;
    } else if (bytes <= 32.0 * 1024.0) {
        report.access_pj = table.mem_32k;
    } else if (bytes <= 1024.0 * 1024.0) {
        report.access_pj = table.mem_1m;
    } else {
        report.access_pj = table.mem_dram;
    }
    report.memory_pj = report.accesses * report.access_pj;
    return report;
}

}  // namespace bnn
