#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

inline uint8_t quantize8(float v) {
    const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

// -------- PPM (P6), the RGB interchange format for dataset images --------

inline void save_ppm(const ImageRGB& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path);
    os << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<uint8_t> row(3ull * image.width);
    for (uint32_t y = 0; y < image.height; ++y) {
        for (uint32_t x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) row[3ull * x + c] = quantize8(image.at(x, y)[c]);
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

inline ImageRGB load_ppm(const std::string& path, uint32_t image_id = 0) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw FormatError("not a P6 PPM: " + path);
    uint32_t w = 0, h = 0, maxval = 0;
    // Header tokens may be separated by whitespace or '#' comment lines.
    auto next_uint = [&](uint32_t& out) {
        while (is) {
            is >> std::ws;
            if (is.peek() == '#') {
                std::string comment;
                std::getline(is, comment);
                continue;
            }
            if (is >> out) return;
        }
        throw FormatError("truncated PPM header: " + path);
    };
    next_uint(w);
    next_uint(h);
    next_uint(maxval);
    if (maxval != 255) throw FormatError("PPM maxval must be 255: " + path);
    is.get(); // single whitespace after maxval

    ImageRGB image(image_id, w, h);
    std::vector<uint8_t> raw(3ull * w * h);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw FormatError("truncated PPM payload: " + path);
    for (size_t i = 0; i < raw.size(); ++i) image.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
    return image;
}

// -------- PNG encoding (8-bit RGB, zlib-deflated) --------

namespace detail {

inline void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<uint32_t>(crc));
}

} // namespace detail

/// Encodes an 8-bit RGB PNG (filter type 0 scanlines, no interlace).
inline std::vector<uint8_t> encode_png(const ImageRGB& image) {
    std::vector<uint8_t> ihdr;
    detail::put_be32(ihdr, image.width);
    detail::put_be32(ihdr, image.height);
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::vector<uint8_t> scanlines;
    scanlines.reserve((3ull * image.width + 1) * image.height);
    for (uint32_t y = 0; y < image.height; ++y) {
        scanlines.push_back(0); // filter: none
        for (uint32_t x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) scanlines.push_back(quantize8(image.at(x, y)[c]));
    }

    uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, scanlines.data(), static_cast<uLong>(scanlines.size()),
                  Z_BEST_SPEED) != Z_OK)
        throw IoError("PNG deflate failed");
    idat.resize(bound);

    static const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> out(kSignature, kSignature + 8);
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", idat);
    detail::png_chunk(out, "IEND", {});
    return out;
}

inline void save_png(const ImageRGB& image, const std::string& path) {
    const std::vector<uint8_t> bytes = encode_png(image);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path);
}

} // namespace semsplat
