#pragma once

// Image file formats: binary PPM (P6) for RGB and PGM (P5) for greyscale,
// 8-bit with linear scaling to/from [0,1], plus a raw float dump
// (ASCII header "w h c", then float32 little-endian pixels) for standardized
// images whose values leave [0,1].

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "augment.hpp"
#include "errors.hpp"

namespace fusecal {

namespace detail {

// Skips whitespace and '#' comments between PNM header tokens.
inline int pnm_read_int(std::istream& in, const std::string& what) {
    for (;;) {
        const int ch = in.peek();
        if (ch == EOF) throw ValidationError("truncated PNM header (" + what + ")");
        if (ch == '#') {
            std::string comment;
            std::getline(in, comment);
            continue;
        }
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw ValidationError("bad PNM header (" + what + ")");
    return value;
}

inline void put_le32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                   static_cast<char>((v >> 16) & 0xFF),
                                   static_cast<char>((v >> 24) & 0xFF)};
    out.write(b.data(), 4);
}

inline std::uint32_t get_le32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

// P5 or P6, maxval up to 255; values scale to v/maxval.
inline Image read_pnm(std::istream& in) {
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw ValidationError("not a binary PGM/PPM file");
    const int channels = (kind == '6') ? 3 : 1;

    const int w = detail::pnm_read_int(in, "width");
    const int h = detail::pnm_read_int(in, "height");
    const int maxval = detail::pnm_read_int(in, "maxval");
    if (w < 1 || h < 1) throw ValidationError("bad PNM dimensions");
    if (maxval < 1 || maxval > 255) throw ValidationError("unsupported PNM maxval");
    in.get();  // single whitespace byte before the raster

    Image img = Image::make(w, h, channels);
    std::string raster(static_cast<std::size_t>(w) * h * channels, '\0');
    in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
    if (in.gcount() != static_cast<std::streamsize>(raster.size()))
        throw ValidationError("truncated PNM raster");
    for (std::size_t i = 0; i < raster.size(); ++i)
        img.pixels[i] = static_cast<double>(static_cast<unsigned char>(raster[i])) / maxval;
    return img;
}

inline void write_pnm(std::ostream& out, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ValidationError("PNM supports 1 or 3 channels");
    for (double v : img.pixels)
        if (!(v >= -1e-9 && v <= 1.0 + 1e-9))
            throw ValidationError("pixel values outside [0,1]; use the float dump format");

    out << (img.channels == 3 ? "P6" : "P5") << '\n'
        << img.width << ' ' << img.height << '\n'
        << "255\n";
    std::string raster;
    raster.reserve(img.pixels.size());
    for (double v : img.pixels) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        raster.push_back(static_cast<char>(std::lround(clamped * 255.0)));
    }
    out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

inline void write_float_dump(std::ostream& out, const Image& img) {
    out << img.width << ' ' << img.height << ' ' << img.channels << '\n';
    for (double v : img.pixels) {
        const float f = static_cast<float>(v);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, sizeof bits);
        detail::put_le32(out, bits);
    }
}

inline Image read_float_dump(std::istream& in) {
    int w = 0, h = 0, c = 0;
    if (!(in >> w >> h >> c)) throw ValidationError("bad float dump header");
    if (w < 1 || h < 1 || (c != 1 && c != 3)) throw ValidationError("bad float dump header");
    in.get();

    Image img = Image::make(w, h, c);
    bool outside = false;
    for (double& px : img.pixels) {
        const std::uint32_t bits = detail::get_le32(in);
        if (!in) throw ValidationError("truncated float dump");
        float f = 0;
        std::memcpy(&f, &bits, sizeof f);
        px = static_cast<double>(f);
        outside |= (px < 0.0 || px > 1.0);
    }
    img.standardized = outside;
    return img;
}

// Sniffs the format from the leading bytes.
inline Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const int first = in.peek();
    if (first == 'P') return read_pnm(in);
    return read_float_dump(in);
}

// Extension picks the writer: .ppm (3-channel), .pgm (1-channel), anything
// else the float dump.
inline void write_image(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const auto ext = path.extension();
    if (ext == ".ppm") {
        if (img.channels != 3) throw ValidationError("PPM requires a 3-channel image");
        write_pnm(out, img);
    } else if (ext == ".pgm") {
        if (img.channels != 1) throw ValidationError("PGM requires a single-channel image");
        write_pnm(out, img);
    } else {
        write_float_dump(out, img);
    }
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace fusecal
