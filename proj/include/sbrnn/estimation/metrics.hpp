#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::estimation {

/// 1-based index of the largest entry; ties resolve to the lowest index.
inline std::uint32_t decide(std::span<const double> p)
{
    if (p.empty()) throw std::invalid_argument("decide: empty posterior");
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return static_cast<std::uint32_t>(best + 1);
}

inline unsigned bits_per_message(std::size_t alphabet)
{
    if (alphabet < 2 || !std::has_single_bit(alphabet))
        throw std::invalid_argument("alphabet size must be a power of two >= 2");
    return static_cast<unsigned>(std::countr_zero(alphabet));
}

/// Reflected binary Gray code of m - 1, as an integer.
inline std::uint32_t gray_index(std::uint32_t m, std::size_t alphabet)
{
    if (m < 1 || m > alphabet) throw std::out_of_range("gray_code: message " + std::to_string(m) + " out of range");
    const std::uint32_t k = m - 1;
    return k ^ (k >> 1);
}

/// Gray code of m as a bit string, most significant bit first.
inline std::string gray_code(std::uint32_t m, std::size_t alphabet)
{
    const unsigned bits = bits_per_message(alphabet);
    const std::uint32_t g = gray_index(m, alphabet);
    std::string s(bits, '0');
    for (unsigned b = 0; b < bits; ++b)
        if (g >> (bits - 1 - b) & 1u) s[b] = '1';
    return s;
}

struct ErrorReport {
    double bler = 0.0;
    double ber = 0.0;
    std::uint64_t block_errors = 0;
    std::uint64_t bit_errors = 0;
    std::uint64_t messages = 0; // |T|, evaluated messages
    std::uint64_t bits = 0;

    friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

inline void require_same_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b)
{
    if (a.size() != b.size()) throw std::invalid_argument("error count: length mismatch");
    if (a.empty()) throw std::invalid_argument("error count: empty sequence");
}

inline double bler(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> decisions)
{
    require_same_length(truth, decisions);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) errors += truth[i] != decisions[i];
    return static_cast<double>(errors) / static_cast<double>(truth.size());
}

/// Block and Gray-mapped bit error counts for one sequence.
inline ErrorReport count_errors(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> decisions,
                                std::size_t alphabet)
{
    require_same_length(truth, decisions);
    const unsigned bits = bits_per_message(alphabet);
    ErrorReport r;
    r.messages = truth.size();
    r.bits = r.messages * bits;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == decisions[i]) continue;
        ++r.block_errors;
        r.bit_errors += static_cast<std::uint64_t>(
            std::popcount(gray_index(truth[i], alphabet) ^ gray_index(decisions[i], alphabet)));
    }
    r.bler = static_cast<double>(r.block_errors) / static_cast<double>(r.messages);
    r.ber = static_cast<double>(r.bit_errors) / static_cast<double>(r.bits);
    return r;
}

inline double ber(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> decisions,
                  std::size_t alphabet)
{
    return count_errors(truth, decisions, alphabet).ber;
}

/// Mean of per-sequence rates with summed counts. Sequences share a length,
/// so the mean of rates equals the pooled rate up to rounding.
inline ErrorReport aggregate(std::span<const ErrorReport> reports)
{
    ErrorReport total;
    if (reports.empty()) return total;
    for (const auto& r : reports) {
        total.block_errors += r.block_errors;
        total.bit_errors += r.bit_errors;
        total.messages += r.messages;
        total.bits += r.bits;
        total.bler += r.bler;
        total.ber += r.ber;
    }
    total.bler /= static_cast<double>(reports.size());
    total.ber /= static_cast<double>(reports.size());
    return total;
}

} // namespace sbrnn::estimation
