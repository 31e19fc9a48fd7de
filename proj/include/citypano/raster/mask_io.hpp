#pragma once

#include <cstdint>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "citypano/error.hpp"
#include "citypano/raster/pano_mask.hpp"

namespace citypano {

/// 8-bit grayscale raster as stored on disk.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

inline std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

inline GrayImage decode_pgm(const std::string& data) {
    std::istringstream in(data);
    auto next_token = [&]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw Error(ErrorCode::InvalidFormat, "truncated PGM header");
    };
    if (next_token() != "P5") throw Error(ErrorCode::InvalidFormat, "not a binary PGM (P5)");
    GrayImage img;
    try {
        img.width = std::stoi(next_token());
        img.height = std::stoi(next_token());
        if (std::stoi(next_token()) != 255) throw Error(ErrorCode::InvalidFormat, "PGM maxval must be 255");
    } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::InvalidFormat, "bad PGM header");
    }
    in.get(); // single whitespace after maxval
    const auto n = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(n);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw Error(ErrorCode::InvalidFormat, "truncated PGM data");
    return img;
}

namespace detail {

struct PngWriteBuffer {
    std::string bytes;
};

inline void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
    buf->bytes.append(reinterpret_cast<const char*>(data), len);
}

inline void png_flush_cb(png_structp) {}

struct PngReadBuffer {
    const std::string* bytes;
    std::size_t offset = 0;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
    auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
    if (buf->offset + len > buf->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(out, buf->bytes->data() + buf->offset, len);
    buf->offset += len;
}

} // namespace detail

inline std::string encode_png(const GrayImage& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    detail::PngWriteBuffer buf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "PNG encoding failed");
    }
    png_set_write_fn(png, &buf, detail::png_write_cb, detail::png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height; ++r) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(r) * img.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return buf.bytes;
}

/// Decodes any 8-bit PNG to grayscale (palette/RGB inputs are converted).
inline GrayImage decode_png(const std::string& data) {
    if (data.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) != 0) {
        throw Error(ErrorCode::InvalidFormat, "not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorCode::IoError, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    detail::PngReadBuffer buf{&data, 0};
    GrayImage img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::InvalidFormat, "PNG decoding failed");
    }
    png_set_read_fn(png, &buf, detail::png_read_cb);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r) {
        png_read_row(png, img.pixels.data() + static_cast<std::size_t>(r) * img.width, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline GrayImage read_gray_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (has_suffix(path, ".png")) return decode_png(data);
    return decode_pgm(data);
}

inline void write_gray_image(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << (has_suffix(path, ".png") ? encode_png(img) : encode_pgm(img));
}

/// Reads a label mask; values must already be quantized to {0, 128, 255}.
inline PanoMask read_mask(const std::string& path) {
    GrayImage img = read_gray_image(path);
    PanoMask mask(img.width, img.height);
    mask.labels = std::move(img.pixels);
    if (!mask.valid_labels()) {
        throw Error(ErrorCode::InvalidFormat, path + ": mask values must be exactly 0, 128 or 255");
    }
    return mask;
}

inline void write_mask(const std::string& path, const PanoMask& mask) {
    write_gray_image(path, {mask.width, mask.height, mask.labels});
}

inline GrayImage to_gray(const OverlayLayer& layer) { return {layer.width, layer.height, layer.pixels}; }

} // namespace citypano
