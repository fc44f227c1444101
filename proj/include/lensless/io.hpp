#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// Binary tensor container. Byte layout (little-endian):
//   offset 0:  8-byte magic "LTENSR01"
//   offset 8:  u32 dtype code (0 = float32, 1 = float64)
//   offset 12: u32 H, u32 W, u32 C
//   offset 24: payload, H*W*C values, row-major with channel fastest
//              (index (i*W + j)*C + c)
namespace tensorfile {
inline constexpr char kMagic[8] = {'L', 'T', 'E', 'N', 'S', 'R', '0', '1'};
inline constexpr uint32_t kF32 = 0, kF64 = 1;
} // namespace tensorfile

namespace detail {
inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t get_u32(std::istream& is, size_t offset, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError("truncated " + what + " at byte offset " + std::to_string(offset));
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}
inline bool host_little_endian() {
    uint32_t probe = 1;
    unsigned char c;
    std::memcpy(&c, &probe, 1);
    return c == 1;
}
} // namespace detail

inline void write_tensor(const std::string& path, const Tensor& t, bool as_float32 = false) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    os.write(tensorfile::kMagic, 8);
    detail::put_u32(os, as_float32 ? tensorfile::kF32 : tensorfile::kF64);
    detail::put_u32(os, (uint32_t)t.height());
    detail::put_u32(os, (uint32_t)t.width());
    detail::put_u32(os, (uint32_t)t.channels());
    if (as_float32) {
        std::vector<float> buf(t.size());
        for (size_t k = 0; k < t.size(); ++k) buf[k] = (float)t[k];
        if (!detail::host_little_endian())
            for (float& v : buf) {
                uint32_t u; std::memcpy(&u, &v, 4);
                u = __builtin_bswap32(u); std::memcpy(&v, &u, 4);
            }
        os.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)(buf.size() * 4));
    } else {
        if (detail::host_little_endian()) {
            os.write(reinterpret_cast<const char*>(t.data()), (std::streamsize)(t.size() * 8));
        } else {
            std::vector<double> buf(t.data(), t.data() + t.size());
            for (double& v : buf) {
                uint64_t u; std::memcpy(&u, &v, 8);
                u = __builtin_bswap64(u); std::memcpy(&v, &u, 8);
            }
            os.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)(buf.size() * 8));
        }
    }
    if (!os) throw FormatError("write failed: " + path);
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for read: " + path);
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8) throw FormatError("truncated magic at byte offset 0 in " + path);
    if (std::memcmp(magic, tensorfile::kMagic, 8) != 0)
        throw FormatError("bad magic at byte offset 0 in " + path);
    uint32_t dtype = detail::get_u32(is, 8, "dtype");
    if (dtype != tensorfile::kF32 && dtype != tensorfile::kF64)
        throw FormatError("unknown dtype code " + std::to_string(dtype) + " at byte offset 8 in " + path);
    uint32_t H = detail::get_u32(is, 12, "height");
    uint32_t W = detail::get_u32(is, 16, "width");
    uint32_t C = detail::get_u32(is, 20, "channels");
    if (H == 0 || W == 0 || C == 0)
        throw FormatError("zero dimension in header at byte offset 12 in " + path);
    size_t n = (size_t)H * W * C;
    Tensor t((int)H, (int)W, (int)C);
    size_t esz = dtype == tensorfile::kF32 ? 4 : 8;
    std::vector<unsigned char> raw(n * esz);
    is.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)raw.size());
    if ((size_t)is.gcount() != raw.size())
        throw FormatError("truncated payload at byte offset " +
                          std::to_string(24 + (size_t)is.gcount()) + " in " + path);
    if (!detail::host_little_endian()) {
        if (esz == 4)
            for (size_t k = 0; k < n; ++k) {
                uint32_t u; std::memcpy(&u, raw.data() + k * 4, 4);
                u = __builtin_bswap32(u); std::memcpy(raw.data() + k * 4, &u, 4);
            }
        else
            for (size_t k = 0; k < n; ++k) {
                uint64_t u; std::memcpy(&u, raw.data() + k * 8, 8);
                u = __builtin_bswap64(u); std::memcpy(raw.data() + k * 8, &u, 8);
            }
    }
    if (esz == 4) {
        for (size_t k = 0; k < n; ++k) {
            float v; std::memcpy(&v, raw.data() + k * 4, 4);
            t[k] = (double)v;
        }
    } else {
        std::memcpy(t.data(), raw.data(), n * 8);
    }
    return t;
}

// Binary PGM (P5, C=1) or PPM (P6, C=3), 8-bit, values clamped to [0,1].
// Quantization: byte = floor(v*255 + 0.5) (round half up).
inline void ppm_export(const Tensor& t, const std::string& path) {
    int C = t.channels();
    if (C != 1 && C != 3)
        throw FormatError("ppm_export supports 1 or 3 channels, got " + std::to_string(C));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    os << (C == 1 ? "P5" : "P6") << "\n" << t.width() << " " << t.height() << "\n255\n";
    std::vector<unsigned char> row((size_t)t.width() * C);
    for (int i = 0; i < t.height(); ++i) {
        for (int j = 0; j < t.width(); ++j)
            for (int c = 0; c < C; ++c) {
                double v = t(i, j, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[(size_t)j * C + c] = (unsigned char)std::floor(v * 255.0 + 0.5);
            }
        os.write(reinterpret_cast<const char*>(row.data()), (std::streamsize)row.size());
    }
    if (!os) throw FormatError("write failed: " + path);
}

} // namespace lensless
