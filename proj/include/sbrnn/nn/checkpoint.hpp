#pragma once

#include "sbrnn/nn/params.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::nn {

// Checkpoint layout (all integers little-endian):
//
//   magic      8 bytes  "SBRNNCKP"
//   version    u32      kCheckpointVersion
//   meta_len   u32      followed by meta_len bytes of "key=value\n" lines
//   count      u32      number of tensor records
//   record     u32 name_len, name bytes, u32 rank, rank x u64 dims,
//              prod(dims) x f64 (IEEE-754 binary64, little-endian)
//
// Metadata keys are written in sorted order, so identical contents produce
// identical bytes.

inline constexpr char kCheckpointMagic[8] = {'S', 'B', 'R', 'N', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> metadata;
    std::vector<std::pair<std::string, Tensor>> tensors;

    static Checkpoint from(const ParamSet& params, std::map<std::string, std::string> meta = {})
    {
        Checkpoint c;
        c.metadata = std::move(meta);
        for (const auto& p : params) c.tensors.emplace_back(p.name, p.value);
        return c;
    }

    /// Copies stored values into an existing parameter set of matching layout.
    void load_into(ParamSet& params) const
    {
        if (tensors.size() != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
        for (const auto& [name, value] : tensors) {
            Parameter& p = params.at(name);
            if (!p.value.same_shape(value))
                throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " + shape_string(value.shape) +
                                         " vs " + shape_string(p.value.shape));
            p.value = value;
            p.grad.assign(value.size(), 0.0);
        }
    }

    [[nodiscard]] const std::string& meta(const std::string& key) const
    {
        auto it = metadata.find(key);
        if (it == metadata.end()) throw std::runtime_error("checkpoint: missing metadata key " + key);
        return it->second;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    std::uint64_t uint(int bytes)
    {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::string bytes(std::size_t n)
    {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[nodiscard]] bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint: truncated data");
    }

    const std::string& data_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt)
{
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_u32(out, kCheckpointVersion);
    std::string meta;
    for (const auto& [k, v] : ckpt.metadata) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint: metadata may not contain '=' in keys or newlines");
        meta += k + "=" + v + "\n";
    }
    detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) detail::put_u64(out, d);
        for (double v : t.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& data)
{
    detail::Reader in(data);
    if (in.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
        throw std::runtime_error("checkpoint: bad magic");
    const auto version = in.uint(4);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    std::istringstream meta(in.bytes(in.uint(4)));
    for (std::string line; std::getline(meta, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed metadata line");
        c.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const auto count = in.uint(4);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = in.bytes(in.uint(4));
        const auto rank = in.uint(4);
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = in.uint(8);
        Tensor t(std::move(dims));
        for (double& v : t.values) v = std::bit_cast<double>(in.uint(8));
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    const std::string bytes = encode_checkpoint(ckpt);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace sbrnn::nn
