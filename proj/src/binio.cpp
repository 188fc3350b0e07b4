#include "salfield/binio.hpp"

namespace salfield {

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on " + path_.string());
}

void BinaryWriter::string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryWriter::f32s(std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        bytes(v.data(), v.size_bytes());
    } else {
        for (float x : v) f32(x);
    }
}

void BinaryWriter::close() {
    out_.close();
    if (!out_) throw IoError("closing " + path_.string() + " failed");
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0);
}

void BinaryReader::bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_.string() + ": truncated file");
}

void BinaryReader::expect_magic(const char (&tag)[5]) {
    char got[4] = {};
    in_.read(got, 4);
    if (in_.gcount() != 4 || std::memcmp(got, tag, 4) != 0)
        throw FormatError(path_.string() + ": bad magic, expected " + std::string(tag, 4));
}

std::string BinaryReader::string() {
    const auto n = u32();
    if (n > remaining()) throw FormatError(path_.string() + ": truncated string");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

std::vector<float> BinaryReader::f32s(std::size_t n) {
    if (n > remaining() / sizeof(float)) throw FormatError(path_.string() + ": truncated file");
    std::vector<float> v(n);
    bytes(v.data(), n * sizeof(float));
    for (auto& x : v) x = detail::byteswap_if_big(x);
    return v;
}

std::uint64_t BinaryReader::remaining() {
    const auto pos = in_.tellg();
    if (pos < 0) return 0;
    return size_ - static_cast<std::uint64_t>(pos);
}

void BinaryReader::expect_end() {
    if (remaining() != 0) throw FormatError(path_.string() + ": trailing bytes after payload");
}

}  // namespace salfield
