#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace cbm {

/// Interleaved RGB, channel values in [0,1], row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;  // size = 3 * width * height

    RgbImage() = default;
    RgbImage(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), pixels(3 * w * h, fill) {}

    double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[3 * (y * width + x) + c]; }
    double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[3 * (y * width + x) + c]; }
};

/// Single-channel luminance image, row-major. Values are signed doubles so
/// the same type carries noise fields; stimulus images stay inside [0,1].
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

    double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    std::size_t size() const { return pixels.size(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct PreprocessConfig {
    std::size_t resize_short_side = 256;  // 0 disables the resize step
    std::size_t crop = 224;
    double contrast_factor = 0.2;
    double contrast_pivot = 0.5;
    std::array<double, 3> grayscale_weights = {0.299, 0.587, 0.114};  // BT.601

    /// Throws ValidationError on out-of-range values.
    void validate() const;
};

/// Step of the dyadic grid stimulus pixels and noise samples are snapped to.
/// Any two grid values in [-1, 2] add and subtract exactly in double
/// precision, so masked - image == noise holds bit for bit.
inline constexpr double kPixelQuantum = 1.0 / 4294967296.0;  // 2^-32

double snap_to_grid(double v);
void snap_to_grid(GrayImage& img);

/// Bilinear resampling with half-pixel centers and clamped borders.
RgbImage resize_bilinear(const RgbImage& src, std::size_t width, std::size_t height);

/// Scales the shorter side to `short_side` keeping aspect (long side rounded).
RgbImage resize_short_side(const RgbImage& src, std::size_t short_side);

/// Central `size` x `size` window; offsets floor((W - size) / 2).
RgbImage center_crop(const RgbImage& src, std::size_t size);
GrayImage center_crop(const GrayImage& src, std::size_t size);

GrayImage to_grayscale(const RgbImage& rgb, const std::array<double, 3>& weights);

/// p' = pivot + factor * (p - pivot)
GrayImage reduce_contrast(const GrayImage& gray, double factor, double pivot);

/// Shorter-side resize, center crop, grayscale, contrast reduction, grid snap.
GrayImage preprocess(const RgbImage& rgb, const PreprocessConfig& config);

/// Same pipeline for an image that is already single-channel.
GrayImage preprocess_gray(const GrayImage& gray, const PreprocessConfig& config);

/// Reads an 8-bit PNG/JPEG (gray inputs are replicated to RGB).
RgbImage load_rgb(const std::filesystem::path& path);
void save_rgb8(const std::filesystem::path& path, const RgbImage& img);

/// 16-bit grayscale PNG. Values are clamped to [0,1] and rounded to 1/65535.
void save_gray16(const std::filesystem::path& path, const GrayImage& img);
GrayImage load_gray16(const std::filesystem::path& path);
std::vector<unsigned char> encode_gray16_png(const GrayImage& img);

/// What a 16-bit export stores for `img`, as doubles.
GrayImage quantize16(const GrayImage& img);

}  // namespace cbm
