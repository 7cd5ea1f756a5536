// 8-bit grayscale PNG / PGM reading and writing. Requires libpng at link time.
//
// Color inputs are reduced to luma with the BT.601 weights. Writing rounds and
// clamps to [0, 255]; this is the only place images are quantized.

#pragma once

#include "mfkc/preprocess.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace mfkc {

inline double bt601_luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline unsigned char quantize_pixel(double v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
}

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads the next whitespace/comment-delimited token of a PNM header.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

inline int pnm_int(std::istream& in, const std::string& what) {
    const std::string tok = pnm_token(in);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw InputError("PNM header: bad " + what + " '" + tok + "'");
    }
}

}  // namespace detail

/// Reads binary (P5/P6) or ASCII (P2/P3) PNM, 8-bit maxval only.
inline ImageMatrix read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image " + path.string());
    const std::string magic = detail::pnm_token(in);
    if (magic != "P2" && magic != "P5" && magic != "P3" && magic != "P6")
        throw InputError(path.string() + ": unsupported PNM magic '" + magic + "'");
    const int width = detail::pnm_int(in, "width");
    const int height = detail::pnm_int(in, "height");
    const int maxval = detail::pnm_int(in, "maxval");
    if (width < 1 || height < 1) throw InputError(path.string() + ": non-positive dimensions");
    if (maxval < 1 || maxval > 255) throw InputError(path.string() + ": only 8-bit PNM is supported");
    const bool color = magic == "P3" || magic == "P6";
    const bool binary = magic == "P5" || magic == "P6";
    const int channels = color ? 3 : 1;
    const double scale = 255.0 / maxval;

    Matrix px(height, width);
    std::vector<unsigned char> row(static_cast<std::size_t>(width * channels));
    for (int y = 0; y < height; ++y) {
        if (binary) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
            if (!in) throw InputError(path.string() + ": truncated pixel data");
        } else {
            for (auto& v : row) v = static_cast<unsigned char>(detail::pnm_int(in, "pixel"));
        }
        for (int x = 0; x < width; ++x) {
            const unsigned char* p = &row[static_cast<std::size_t>(x * channels)];
            px(y, x) = color ? bt601_luma(p[0] * scale, p[1] * scale, p[2] * scale) : p[0] * scale;
        }
    }
    return ImageMatrix(std::move(px));
}

inline void write_pgm(const ImageMatrix& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write image " + path.string());
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width()));
    for (Index y = 0; y < img.height(); ++y) {
        for (Index x = 0; x < img.width(); ++x) row[static_cast<std::size_t>(x)] = quantize_pixel(img(y, x));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw InputError("failed writing image " + path.string());
}

inline ImageMatrix read_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw InputError("cannot open image " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InputError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InputError("libpng initialisation failed");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError(path.string() + ": malformed PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Matrix px(static_cast<Index>(height), static_cast<Index>(width));
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            const png_byte* p = rows[y] + static_cast<std::size_t>(x) * channels;
            px(y, x) = channels >= 3 ? bt601_luma(p[0], p[1], p[2]) : static_cast<double>(p[0]);
        }
    }
    return ImageMatrix(std::move(px));
}

inline void write_png(const ImageMatrix& img, const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw InputError("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InputError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw InputError("libpng initialisation failed");
    }
    std::vector<png_byte> buffer(static_cast<std::size_t>(img.width() * img.height()));
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            buffer[static_cast<std::size_t>(y * img.width() + x)] = quantize_pixel(img(y, x));
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    for (Index y = 0; y < img.height(); ++y) rows[static_cast<std::size_t>(y)] = &buffer[static_cast<std::size_t>(y * img.width())];

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("failed writing image " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Dispatches on extension: .png, or .pgm/.pnm/.ppm.
inline ImageMatrix read_image(const std::filesystem::path& path) {
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm" || ext == ".pnm" || ext == ".ppm") return read_pnm(path);
    throw InputError("unsupported image format: " + path.string());
}

inline void write_image(const ImageMatrix& img, const std::filesystem::path& path) {
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") return write_png(img, path);
    if (ext == ".pgm" || ext == ".pnm") return write_pgm(img, path);
    throw InputError("unsupported image format: " + path.string());
}

}  // namespace mfkc
