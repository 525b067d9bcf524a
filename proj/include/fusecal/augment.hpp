#pragma once

// Image preprocessing chain: bilinear resize to a target size, Rec.601
// greyscale, per-channel standardization, seeded random reflections, and a
// seeded random rotation. Transform order is fixed (resize first) and every
// step is deterministic given the generator state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"
#include "prng.hpp"

namespace fusecal {

// Row-major pixel grid with interleaved channels in [0,1]. `standardized`
// marks images that went through a non-identity normalization and may hold
// values outside [0,1]; the 8-bit writers reject those.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    bool standardized = false;
    std::vector<double> pixels;

    bool operator==(const Image&) const = default;

    static Image make(int w, int h, int c, double fill = 0.0, bool standardized = false) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw ValidationError("invalid image dimensions");
        return Image{w, h, c, standardized,
                     std::vector<double>(static_cast<std::size_t>(w) * h * c, fill)};
    }

    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

struct AugmentConfig {
    int target_width = 224;
    int target_height = 224;
    double flip_h_prob = 0.5;
    double flip_v_prob = 0.5;
    double max_rotation_deg = 45.0;
    bool to_greyscale = true;
    std::vector<double> norm_mean{0.5};  // size 1 broadcasts over channels
    std::vector<double> norm_std{0.5};
    std::uint64_t seed = 0;
};

inline void validate(const AugmentConfig& cfg) {
    if (cfg.target_width < 1 || cfg.target_height < 1)
        throw ValidationError("target size must be positive");
    if (!(cfg.flip_h_prob >= 0.0 && cfg.flip_h_prob <= 1.0) ||
        !(cfg.flip_v_prob >= 0.0 && cfg.flip_v_prob <= 1.0))
        throw ValidationError("flip probabilities must be in [0,1]");
    if (!(cfg.max_rotation_deg >= 0.0 && cfg.max_rotation_deg <= 180.0))
        throw ValidationError("max rotation must be in [0,180] degrees");
    if (cfg.norm_mean.empty() || cfg.norm_std.empty())
        throw ValidationError("normalization statistics must be nonempty");
}

namespace detail {

// Lerp form: constant neighborhoods come back exactly, and integer sample
// coordinates reproduce the source pixel bit for bit.
inline double bilinear_sample(const Image& img, double fx, double fy, int c) {
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wx = fx - x0;
    const double wy = fy - y0;
    const double top = img.at(x0, y0, c) + wx * (img.at(x1, y0, c) - img.at(x0, y0, c));
    const double bottom = img.at(x0, y1, c) + wx * (img.at(x1, y1, c) - img.at(x0, y1, c));
    return top + wy * (bottom - top);
}

}  // namespace detail

// Half-pixel-centered sampling: output pixel (x,y) reads the source at
// ((x+0.5)*sw/w - 0.5, (y+0.5)*sh/h - 0.5), clamped to the source grid.
inline Image resize_bilinear(const Image& img, int w, int h) {
    if (w < 1 || h < 1) throw ValidationError("resize target must be positive");
    Image out = Image::make(w, h, img.channels, 0.0, img.standardized);
    const double sx = static_cast<double>(img.width) / w;
    const double sy = static_cast<double>(img.height) / h;
    for (int y = 0; y < h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        for (int x = 0; x < w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = detail::bilinear_sample(img, fx, fy, c);
        }
    }
    return out;
}

// Rec.601 luma: y = 0.299 R + 0.587 G + 0.114 B.
inline Image greyscale(const Image& img) {
    if (img.channels != 3) throw ValidationError("greyscale requires a 3-channel image");
    Image out = Image::make(img.width, img.height, 1, 0.0, img.standardized);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(x, y, 0) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    return out;
}

// (x - mean) / std per channel; statistics of size 1 broadcast. The result is
// marked standardized unless the transform is the identity.
inline Image normalize(const Image& img, std::span<const double> mean, std::span<const double> std_dev) {
    const auto nc = static_cast<std::size_t>(img.channels);
    if ((mean.size() != 1 && mean.size() != nc) || (std_dev.size() != 1 && std_dev.size() != nc))
        throw ValidationError("normalization statistics do not match channel count");
    for (double s : std_dev)
        if (!(s > 0.0)) throw ValidationError("non-positive std");

    bool identity = true;
    for (double m : mean) identity &= (m == 0.0);
    for (double s : std_dev) identity &= (s == 1.0);

    Image out = img;
    out.standardized = img.standardized || !identity;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double m = mean[mean.size() == 1 ? 0 : static_cast<std::size_t>(c)];
                const double s = std_dev[std_dev.size() == 1 ? 0 : static_cast<std::size_t>(c)];
                out.at(x, y, c) = (img.at(x, y, c) - m) / s;
            }
    return out;
}

inline Image flip_h(const Image& img) {
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

inline Image flip_v(const Image& img) {
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = img.at(x, img.height - 1 - y, c);
    return out;
}

// Rotation about the image center with bilinear resampling; output dimensions
// are unchanged and source points outside the grid produce `fill`. Positive
// angles rotate the content counter-clockwise on screen.
inline Image rotate(const Image& img, double degrees, double fill = 0.0) {
    if (!std::isfinite(degrees)) throw ValidationError("rotation angle must be finite");
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cx = img.width / 2.0;
    const double cy = img.height / 2.0;

    Image out = Image::make(img.width, img.height, img.channels, fill, img.standardized);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double dx = (x + 0.5) - cx;
            const double dy = (y + 0.5) - cy;
            const double fx = (cs * dx + sn * dy + cx) - 0.5;
            const double fy = (-sn * dx + cs * dy + cy) - 0.5;
            if (fx < 0.0 || fx > img.width - 1 || fy < 0.0 || fy > img.height - 1) continue;
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = detail::bilinear_sample(img, fx, fy, c);
        }
    }
    return out;
}

// Fixed order: resize, greyscale (if enabled and applicable), normalize,
// random flips, random rotation uniform in [-max, +max] degrees. Exactly
// three uniforms are drawn per image regardless of configuration.
inline Image apply_pipeline(const Image& img, const AugmentConfig& cfg, Rng& rng) {
    validate(cfg);
    Image out = resize_bilinear(img, cfg.target_width, cfg.target_height);
    if (cfg.to_greyscale && out.channels == 3) out = greyscale(out);
    out = normalize(out, cfg.norm_mean, cfg.norm_std);

    const double u_h = rng.next_double();
    const double u_v = rng.next_double();
    const double u_r = rng.next_double();
    if (u_h < cfg.flip_h_prob) out = flip_h(out);
    if (u_v < cfg.flip_v_prob) out = flip_v(out);
    out = rotate(out, (2.0 * u_r - 1.0) * cfg.max_rotation_deg);
    return out;
}

inline Image apply_pipeline(const Image& img, const AugmentConfig& cfg) {
    Rng rng(cfg.seed);
    return apply_pipeline(img, cfg, rng);
}

}  // namespace fusecal
