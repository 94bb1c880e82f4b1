#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace pointtc::le {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_uint(std::istream& is, int bytes) {
    unsigned char b[8] = {};
    if (!is.read(reinterpret_cast<char*>(b), bytes)) throw std::runtime_error("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint32_t read_u32(std::istream& is) { return static_cast<std::uint32_t>(read_uint(is, 4)); }
inline std::uint64_t read_u64(std::istream& is) { return read_uint(is, 8); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

}  // namespace pointtc::le
