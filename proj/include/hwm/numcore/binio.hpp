#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

// Little-endian primitives shared by the episode and checkpoint formats.
namespace hwm::binio {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class U>
void put_le(std::ostream& os, U v) {
    static_assert(std::is_integral_v<U>);
    using Unsigned = std::make_unsigned_t<U>;
    auto u = static_cast<Unsigned>(v);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        buf[i] = static_cast<char>(u & 0xFF);
        u = static_cast<Unsigned>(u >> 8);
    }
    os.write(buf, sizeof(U));
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(os, bits);
}

template <class U>
U get_le(std::istream& is) {
    static_assert(std::is_integral_v<U>);
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
        throw FormatError("unexpected end of file");
    }
    std::make_unsigned_t<U> u = 0;
    for (std::size_t i = sizeof(U); i-- > 0;) {
        u = static_cast<std::make_unsigned_t<U>>((u << 8) | buf[i]);
    }
    return static_cast<U>(u);
}

inline float get_f32(std::istream& is) {
    const auto bits = get_le<std::uint32_t>(is);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) {
    os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
    char buf[4];
    if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(what + ": bad magic, expected " + std::string(magic, 4));
    }
}

}  // namespace hwm::binio
