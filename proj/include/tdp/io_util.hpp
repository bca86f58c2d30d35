#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tdp/types.hpp"

namespace tdp {

// Little-endian scalar I/O for the binary dataset/checkpoint formats.
// The build targets little-endian hosts; a big-endian host would need byte
// swaps here and nowhere else.
static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this host");

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw ParseError(std::string("unexpected end of file while reading ") + what);
    return value;
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char buf[4] = {};
    is.read(buf, 4);
    if (!is || std::memcmp(buf, magic, 4) != 0)
        throw ParseError(std::string("bad magic for ") + what);
}

}  // namespace tdp
