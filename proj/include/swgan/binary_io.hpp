// SPDX-License-Identifier: Apache-2.0
//
// Little-endian file formats.
//
// Tensor fixture ("TNSR"):
//   char[4] "TNSR" | u32 rank | u32 dims[rank] | f64 data[prod(dims)]
//
// Parameter container ("SWGN" checkpoints, "FEXT" extractor weights):
//   char[4] magic | u32 version | u32 meta_len | u8 meta[meta_len]
//   u32 entry_count | entry_count x { u32 path_len | u8 path[path_len] |
//                                     u32 rank | u32 dims[rank] | u64 offset }
//   u64 payload_count | f32 payload[payload_count]
//   u32 section_count | section_count x { char[4] tag | u64 len | u8 bytes[len] }
//   u32 crc32 of every preceding byte
//
// `offset` counts f32 elements from the start of the payload.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "swgan/error.hpp"
#include "swgan/tensor.hpp"

namespace swgan {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void tag(std::string_view four) {
        if (four.size() != 4) {
            throw ValueError("tags are four bytes");
        }
        raw(four.data(), 4);
    }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void f32s(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }

    std::vector<std::uint8_t>& bytes() { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void raw(void* p, std::size_t n) {
        if (n > bytes_.size() - pos_) {
            throw FormatError("truncated data");
        }
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::string tag() {
        std::string s(4, '\0');
        raw(s.data(), 4);
        return s;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    float f32() {
        float v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<float> f32s(std::uint64_t count) {
        if (count > remaining() / sizeof(float)) {
            throw FormatError("truncated float payload");
        }
        std::vector<float> v(count);
        raw(v.data(), count * sizeof(float));
        return v;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = ::crc32(crc, bytes.data() + pos, n);
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

// ---------------------------------------------------------------- TNSR

template <class T>
std::vector<std::uint8_t> encode_tensor_fixture(const Tensor<T>& t) {
    ByteWriter w;
    w.tag("TNSR");
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) {
        w.u32(static_cast<std::uint32_t>(d));
    }
    for (T v : t.data()) {
        w.f64(static_cast<double>(v));
    }
    return w.take();
}

template <class T>
Tensor<T> decode_tensor_fixture(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.tag() != "TNSR") {
        throw FormatError("not a TNSR tensor fixture");
    }
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) {
        d = r.u32();
    }
    const std::size_t n = shape_numel(shape);
    if (r.remaining() != n * sizeof(double)) {
        throw FormatError("TNSR payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * sizeof(double)));
    }
    std::vector<T> data(n);
    for (auto& v : data) {
        v = static_cast<T>(r.f64());
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
void save_tensor_fixture(const std::filesystem::path& path, const Tensor<T>& t) {
    write_file_bytes(path, encode_tensor_fixture(t));
}

template <class T>
Tensor<T> load_tensor_fixture(const std::filesystem::path& path) {
    return decode_tensor_fixture<T>(read_file_bytes(path));
}

// ---------------------------------------------------------------- container

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
    std::string path;
    Shape shape;
    std::vector<float> values;
};

struct ContainerSection {
    std::string tag;
    std::vector<std::uint8_t> bytes;
};

struct ParamContainer {
    std::string magic;
    std::string metadata;
    std::vector<ContainerEntry> entries;
    std::vector<ContainerSection> sections;

    const ContainerEntry* find(const std::string& path) const {
        for (const auto& e : entries) {
            if (e.path == path) {
                return &e;
            }
        }
        return nullptr;
    }

    const ContainerSection* section(const std::string& tag) const {
        for (const auto& s : sections) {
            if (s.tag == tag) {
                return &s;
            }
        }
        return nullptr;
    }
};

inline std::vector<std::uint8_t> encode_container(const ParamContainer& c) {
    ByteWriter w;
    w.tag(c.magic);
    w.u32(kContainerVersion);
    w.str(c.metadata);
    w.u32(static_cast<std::uint32_t>(c.entries.size()));
    std::uint64_t offset = 0;
    for (const auto& e : c.entries) {
        if (shape_numel(e.shape) != e.values.size()) {
            throw ShapeError("container entry " + e.path + " has inconsistent shape");
        }
        w.str(e.path);
        w.u32(static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        w.u64(offset);
        offset += e.values.size();
    }
    w.u64(offset);
    for (const auto& e : c.entries) {
        w.f32s(e.values);
    }
    w.u32(static_cast<std::uint32_t>(c.sections.size()));
    for (const auto& s : c.sections) {
        w.tag(s.tag);
        w.u64(s.bytes.size());
        w.raw(s.bytes.data(), s.bytes.size());
    }
    const std::uint32_t crc = crc32_of(w.bytes());
    w.u32(crc);
    return w.take();
}

// Verifies magic, checksum and version before parsing anything else.
inline ParamContainer decode_container(std::span<const std::uint8_t> bytes, std::string_view expected_magic) {
    if (bytes.size() < 12) {
        throw FormatError("file too short to be a parameter container");
    }
    const std::string magic(reinterpret_cast<const char*>(bytes.data()), 4);
    if (magic != expected_magic) {
        throw FormatError("bad magic '" + magic + "', expected '" + std::string(expected_magic) + "'");
    }
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32_of(bytes.first(bytes.size() - 4)) != stored_crc) {
        throw FormatError("checksum mismatch: file is corrupted");
    }
    ByteReader r(bytes.first(bytes.size() - 4));
    ParamContainer c;
    c.magic = r.tag();
    const auto version = r.u32();
    if (version != kContainerVersion) {
        throw FormatError("unsupported container version " + std::to_string(version) + " (expected " +
                          std::to_string(kContainerVersion) + ")");
    }
    c.metadata = r.str();
    const auto count = r.u32();
    std::vector<std::uint64_t> offsets(count);
    c.entries.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& e = c.entries[i];
        e.path = r.str();
        e.shape.resize(r.u32());
        for (auto& d : e.shape) {
            d = r.u32();
        }
        offsets[i] = r.u64();
    }
    const auto payload_count = r.u64();
    const auto payload = r.f32s(payload_count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& e = c.entries[i];
        const std::size_t n = shape_numel(e.shape);
        if (offsets[i] > payload.size() || n > payload.size() - offsets[i]) {
            throw FormatError("entry " + e.path + " points outside the payload");
        }
        e.values.assign(payload.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                        payload.begin() + static_cast<std::ptrdiff_t>(offsets[i] + n));
    }
    const auto sections = r.u32();
    for (std::uint32_t i = 0; i < sections; ++i) {
        ContainerSection s;
        s.tag = r.tag();
        const auto len = r.u64();
        if (len > r.remaining()) {
            throw FormatError("section " + s.tag + " is truncated");
        }
        s.bytes.resize(len);
        r.raw(s.bytes.data(), len);
        c.sections.push_back(std::move(s));
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after container sections");
    }
    return c;
}

}  // namespace swgan
