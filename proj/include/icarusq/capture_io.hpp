#ifndef ICARUSQ_CAPTURE_IO_HPP
#define ICARUSQ_CAPTURE_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "icarusq/board.hpp"

namespace icarusq {

// Compact capture container: 8-byte header (magic "IQCP"-style u16 0x4951,
// u16 channel count, u32 per-channel length), then little-endian signed
// 16-bit codes, channel-major.
inline constexpr std::uint16_t kCaptureMagic = 0x4951;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

inline std::string encode_capture(const std::vector<std::vector<std::int16_t>>& channels) {
    if (channels.empty())
        throw std::invalid_argument("encode_capture: no channels");
    const std::size_t len = channels.front().size();
    for (const auto& ch : channels)
        if (ch.size() != len)
            throw std::invalid_argument("encode_capture: ragged channel lengths");
    std::string out;
    out.reserve(8 + 2 * channels.size() * len);
    detail::put_u16(out, kCaptureMagic);
    detail::put_u16(out, static_cast<std::uint16_t>(channels.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(len));
    for (const auto& ch : channels)
        for (std::int16_t c : ch)
            detail::put_u16(out, static_cast<std::uint16_t>(c));
    return out;
}

inline std::vector<std::vector<std::int16_t>> decode_capture(const std::string& bytes) {
    if (bytes.size() < 8)
        throw std::invalid_argument("decode_capture: truncated header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (detail::get_u16(p) != kCaptureMagic)
        throw std::invalid_argument("decode_capture: bad magic");
    const std::uint16_t n_ch = detail::get_u16(p + 2);
    const std::uint32_t len = detail::get_u32(p + 4);
    if (bytes.size() != 8 + 2ull * n_ch * len)
        throw std::invalid_argument("decode_capture: size mismatch");
    std::vector<std::vector<std::int16_t>> out(n_ch);
    const unsigned char* q = p + 8;
    for (auto& ch : out) {
        ch.resize(len);
        for (std::uint32_t i = 0; i < len; ++i, q += 2)
            ch[i] = static_cast<std::int16_t>(detail::get_u16(q));
    }
    return out;
}

/// One column per channel, no header row beyond the channel labels.
inline std::string capture_to_csv(const std::vector<std::vector<std::int16_t>>& channels) {
    if (channels.empty())
        throw std::invalid_argument("capture_to_csv: no channels");
    std::ostringstream os;
    for (std::size_t c = 0; c < channels.size(); ++c)
        os << (c ? "," : "") << "ch" << c;
    os << "\n";
    const std::size_t len = channels.front().size();
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < channels.size(); ++c)
            os << (c ? "," : "") << channels[c][i];
        os << "\n";
    }
    return os.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("write_file: cannot open " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("read_file: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

} // namespace icarusq

#endif
