#include "cbm/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cbm/error.hpp"

namespace cbm {

void PreprocessConfig::validate() const {
    if (crop == 0) throw ValidationError("preprocess.crop must be positive");
    if (resize_short_side != 0 && resize_short_side < crop)
        throw ValidationError("preprocess.resize_short_side must be >= crop (or 0 to disable)");
    if (!(contrast_factor > 0.0 && contrast_factor <= 1.0))
        throw ValidationError("preprocess.contrast_factor must be in (0, 1]");
    if (!(contrast_pivot >= 0.0 && contrast_pivot <= 1.0))
        throw ValidationError("preprocess.contrast_pivot must be in [0, 1]");
    double sum = 0.0;
    for (double w : grayscale_weights) {
        if (!(w >= 0.0)) throw ValidationError("preprocess.grayscale_weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("preprocess.grayscale_weights must sum to 1");
}

double snap_to_grid(double v) { return std::nearbyint(v / kPixelQuantum) * kPixelQuantum; }

void snap_to_grid(GrayImage& img) {
    for (double& p : img.pixels) p = snap_to_grid(p);
}

RgbImage resize_bilinear(const RgbImage& src, std::size_t width, std::size_t height) {
    if (src.width == 0 || src.height == 0 || width == 0 || height == 0)
        throw ValidationError("resize of an empty image");
    RgbImage dst(width, height);
    const double sx = static_cast<double>(src.width) / static_cast<double>(width);
    const double sy = static_cast<double>(src.height) / static_cast<double>(height);
    const auto max_x = static_cast<long>(src.width) - 1;
    const auto max_y = static_cast<long>(src.height) - 1;

    for (std::size_t y = 0; y < height; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        long y0 = static_cast<long>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        long ya = std::clamp(y0, 0L, max_y);
        long yb = std::clamp(y0 + 1, 0L, max_y);
        for (std::size_t x = 0; x < width; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            long x0 = static_cast<long>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            long xa = std::clamp(x0, 0L, max_x);
            long xb = std::clamp(x0 + 1, 0L, max_x);
            for (std::size_t c = 0; c < 3; ++c) {
                double top = (1.0 - wx) * src.at(xa, ya, c) + wx * src.at(xb, ya, c);
                double bottom = (1.0 - wx) * src.at(xa, yb, c) + wx * src.at(xb, yb, c);
                dst.at(x, y, c) = (1.0 - wy) * top + wy * bottom;
            }
        }
    }
    return dst;
}

RgbImage resize_short_side(const RgbImage& src, std::size_t short_side) {
    if (src.width == 0 || src.height == 0) throw ValidationError("resize of an empty image");
    std::size_t w, h;
    if (src.width <= src.height) {
        w = short_side;
        h = static_cast<std::size_t>(std::lround(static_cast<double>(src.height) * short_side / src.width));
    } else {
        h = short_side;
        w = static_cast<std::size_t>(std::lround(static_cast<double>(src.width) * short_side / src.height));
    }
    if (w == src.width && h == src.height) return src;
    return resize_bilinear(src, w, h);
}

namespace {

void check_crop(std::size_t width, std::size_t height, std::size_t size) {
    if (width < size || height < size)
        throw ValidationError("image " + std::to_string(width) + "x" + std::to_string(height) +
                              " is smaller than the " + std::to_string(size) + " crop");
}

}  // namespace

RgbImage center_crop(const RgbImage& src, std::size_t size) {
    check_crop(src.width, src.height, size);
    const std::size_t ox = (src.width - size) / 2;
    const std::size_t oy = (src.height - size) / 2;
    RgbImage dst(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (std::size_t c = 0; c < 3; ++c) dst.at(x, y, c) = src.at(x + ox, y + oy, c);
    return dst;
}

GrayImage center_crop(const GrayImage& src, std::size_t size) {
    check_crop(src.width, src.height, size);
    const std::size_t ox = (src.width - size) / 2;
    const std::size_t oy = (src.height - size) / 2;
    GrayImage dst(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) dst.at(x, y) = src.at(x + ox, y + oy);
    return dst;
}

GrayImage to_grayscale(const RgbImage& rgb, const std::array<double, 3>& weights) {
    if (rgb.pixels.size() != 3 * rgb.width * rgb.height) throw ValidationError("RGB buffer has the wrong size");
    GrayImage out(rgb.width, rgb.height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const double* p = &rgb.pixels[3 * i];
        out.pixels[i] = weights[0] * p[0] + weights[1] * p[1] + weights[2] * p[2];
    }
    return out;
}

GrayImage reduce_contrast(const GrayImage& gray, double factor, double pivot) {
    if (!(factor > 0.0 && factor <= 1.0)) throw ValidationError("contrast factor must be in (0, 1]");
    GrayImage out = gray;
    if (factor == 1.0) return out;
    for (double& p : out.pixels) p = pivot + factor * (p - pivot);
    return out;
}

GrayImage preprocess(const RgbImage& rgb, const PreprocessConfig& config) {
    config.validate();
    RgbImage sized = config.resize_short_side ? resize_short_side(rgb, config.resize_short_side) : rgb;
    GrayImage gray = to_grayscale(center_crop(sized, config.crop), config.grayscale_weights);
    GrayImage out = reduce_contrast(gray, config.contrast_factor, config.contrast_pivot);
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    snap_to_grid(out);
    return out;
}

GrayImage preprocess_gray(const GrayImage& gray, const PreprocessConfig& config) {
    config.validate();
    RgbImage rgb(gray.width, gray.height);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i)
        for (std::size_t c = 0; c < 3; ++c) rgb.pixels[3 * i + c] = gray.pixels[i];
    // Equal channels and weights summing to one make grayscale conversion exact.
    return preprocess(rgb, config);
}

RgbImage load_rgb(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot read image", path.string());
    RgbImage out(static_cast<std::size_t>(m.cols), static_cast<std::size_t>(m.rows));
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV stores BGR.
            for (int c = 0; c < 3; ++c)
                out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(c)) =
                    row[x][2 - c] / 255.0;
        }
    }
    return out;
}

void save_rgb8(const std::filesystem::path& path, const RgbImage& img) {
    cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3);
    for (int y = 0; y < m.rows; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(c));
                row[x][2 - c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
    }
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image", path.string());
}

namespace {

cv::Mat to_mat16(const GrayImage& img) {
    cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_16UC1);
    for (int y = 0; y < m.rows; ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < m.cols; ++x) {
            double v = std::clamp(img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)), 0.0, 1.0);
            row[x] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    }
    return m;
}

}  // namespace

GrayImage quantize16(const GrayImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out.pixels[i] = static_cast<double>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 65535.0)) / 65535.0;
    return out;
}

void save_gray16(const std::filesystem::path& path, const GrayImage& img) {
    if (!cv::imwrite(path.string(), to_mat16(img))) throw IoError("cannot write image", path.string());
}

std::vector<unsigned char> encode_gray16_png(const GrayImage& img) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", to_mat16(img), buf)) throw IoError("PNG encoding failed");
    return buf;
}

GrayImage load_gray16(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read image", path.string());
    if (m.depth() != CV_16U) throw ValidationError("expected a 16-bit grayscale PNG: " + path.string());
    GrayImage out(static_cast<std::size_t>(m.cols), static_cast<std::size_t>(m.rows));
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < m.cols; ++x)
            out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = row[x] / 65535.0;
    }
    return out;
}

}  // namespace cbm
