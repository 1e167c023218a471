#pragma once

#include <boost/random/taus88.hpp>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

namespace sbrnn::harness {

/// Training messages come from MT19937, test messages from a combined
/// three-component Tausworthe generator; the two never share a stream.
enum class RngKind { mersenne, tausworthe };

inline std::string to_string(RngKind k) { return k == RngKind::mersenne ? "mersenne" : "tausworthe"; }

inline RngKind parse_rng_kind(const std::string& s)
{
    if (s == "mersenne" || s == "mt19937") return RngKind::mersenne;
    if (s == "tausworthe" || s == "taus88") return RngKind::tausworthe;
    throw std::invalid_argument("unknown RNG kind: " + s);
}

/// Maps 32-bit words to {1..alphabet} by rejection of the incomplete top
/// range.
template <class Engine>
std::uint32_t uniform_message(Engine& engine, std::uint32_t alphabet)
{
    if (alphabet == 0) throw std::invalid_argument("uniform_message: empty alphabet");
    constexpr std::uint64_t range = std::uint64_t{1} << 32;
    const std::uint64_t limit = range - range % alphabet;
    for (;;) {
        const std::uint64_t word = static_cast<std::uint32_t>(engine());
        if (word < limit) return static_cast<std::uint32_t>(word % alphabet) + 1;
    }
}

class MessageStream {
public:
    static MessageStream mersenne(std::uint32_t seed) { return MessageStream(std::mt19937(seed)); }
    static MessageStream tausworthe(std::uint32_t seed) { return MessageStream(boost::random::taus88(seed)); }

    static MessageStream make(RngKind kind, std::uint32_t seed)
    {
        return kind == RngKind::mersenne ? mersenne(seed) : tausworthe(seed);
    }

    [[nodiscard]] RngKind kind() const
    {
        return std::holds_alternative<std::mt19937>(engine_) ? RngKind::mersenne : RngKind::tausworthe;
    }

    std::uint32_t next_word()
    {
        return std::visit([](auto& e) { return static_cast<std::uint32_t>(e()); }, engine_);
    }

    std::uint32_t next_message(std::uint32_t alphabet)
    {
        return std::visit([alphabet](auto& e) { return uniform_message(e, alphabet); }, engine_);
    }

private:
    template <class E>
    explicit MessageStream(E e) : engine_(std::move(e)) {}

    std::variant<std::mt19937, boost::random::taus88> engine_;
};

/// 32-bit seed for substream `index` of a run seeded by `seed`.
inline std::uint32_t substream_seed(std::uint64_t seed, std::uint64_t index, std::uint32_t purpose)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), purpose};
    std::uint32_t out = 0;
    seq.generate(&out, &out + 1);
    return out;
}

} // namespace sbrnn::harness
