#pragma once

// Little-endian binary streams shared by the sample, checkpoint and grid formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace salfield {

/// Malformed or unsupported file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
template <class T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}
}  // namespace detail

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path);

    void bytes(const void* data, std::size_t n);
    void magic(const char (&tag)[5]) { bytes(tag, 4); }
    template <class T>
    void put(T v) {
        static_assert(std::is_arithmetic_v<T>);
        v = detail::byteswap_if_big(v);
        bytes(&v, sizeof(T));
    }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f32(float v) { put(v); }
    void f64(double v) { put(v); }
    void string(const std::string& s);
    void f32s(std::span<const float> v);
    void close();

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path);

    void bytes(void* data, std::size_t n);
    void expect_magic(const char (&tag)[5]);
    template <class T>
    T get() {
        static_assert(std::is_arithmetic_v<T>);
        T v;
        bytes(&v, sizeof(T));
        return detail::byteswap_if_big(v);
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }
    std::string string();
    std::vector<float> f32s(std::size_t n);
    /// Bytes left in the file; used to bound untrusted counts before allocating.
    std::uint64_t remaining();
    void expect_end();

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uint64_t size_ = 0;
};

}  // namespace salfield
