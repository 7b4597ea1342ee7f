#pragma once

#include <cstring>
#include <fstream>

#include "lfr/optim.hpp"

namespace lfr {

// Flat checkpoint container: magic, version, entry count, then per entry
// name length / name bytes / dtype tag / rank / shape / raw little-endian
// data. Round-trips bit-exactly.

namespace ckpt {

constexpr char kMagic[4] = {'L', 'F', 'R', 'C'};
constexpr uint32_t kVersion = 1;

enum Dtype : uint8_t { kF32 = 1, kF64 = 2 };

template <typename T>
constexpr uint8_t dtype_tag() {
    return sizeof(T) == 4 ? kF32 : kF64;
}

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

template <typename T>
void put_scalar_le(std::ostream& os, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if constexpr (sizeof(T) == 4) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
    } else {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(os, bits);
    }
}

template <typename T>
T get_scalar_le(std::istream& is) {
    T v;
    if constexpr (sizeof(T) == 4) {
        uint32_t bits = get_u32(is);
        std::memcpy(&v, &bits, 4);
    } else {
        uint64_t bits = get_u64(is);
        std::memcpy(&v, &bits, 8);
    }
    return v;
}

}  // namespace ckpt

template <typename T>
void save_params(const ParamSetT<T>& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(ckpt::kMagic, 4);
    ckpt::put_u32(os, ckpt::kVersion);
    ckpt::put_u64(os, params.order.size());
    for (const auto& name : params.order) {
        const auto& t = params.get(name).value();
        ckpt::put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(ckpt::dtype_tag<T>()));
        ckpt::put_u32(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape) ckpt::put_u64(os, static_cast<uint64_t>(d));
        for (T v : t.data) ckpt::put_scalar_le(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

// Loads entries in file order. Entry dtype must match the build precision.
template <typename T>
ParamSetT<T> load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = ckpt::get_u32(is);
    if (version != ckpt::kVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    const uint64_t count = ckpt::get_u64(is);
    ParamSetT<T> out;
    for (uint64_t e = 0; e < count; ++e) {
        const uint32_t name_len = ckpt::get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint8_t tag = static_cast<uint8_t>(is.get());
        if (tag != ckpt::dtype_tag<T>())
            throw std::runtime_error("checkpoint: dtype mismatch for '" + name + "'");
        const uint32_t rank = ckpt::get_u32(is);
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(ckpt::get_u64(is));
        TensorT<T> t(shape);
        for (auto& v : t.data) v = ckpt::get_scalar_le<T>(is);
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        out.add(name, std::move(t));
    }
    return out;
}

}  // namespace lfr
