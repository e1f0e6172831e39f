#include <gtest/gtest.h>

#include <opencv2/imgproc.hpp>

#include <random>

#include "cbm/error.hpp"
#include "cbm/imaging.hpp"
#include "fixtures.hpp"

using namespace cbm;

namespace {

RgbImage uniform(std::size_t w, std::size_t h, double r, double g, double b) {
    RgbImage img(w, h);
    for (std::size_t i = 0; i < w * h; ++i) {
        img.pixels[3 * i] = r;
        img.pixels[3 * i + 1] = g;
        img.pixels[3 * i + 2] = b;
    }
    return img;
}

RgbImage random_photo(std::size_t w, std::size_t h, std::uint64_t seed) {
    // Smooth structure plus pixel noise, so resampling has something to do.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RgbImage img(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double s = 0.5 + 0.3 * std::sin(0.05 * x * (c + 1)) * std::cos(0.07 * y);
                img.at(x, y, c) = std::clamp(s + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
            }
    return img;
}

}  // namespace

TEST(Preprocess, UniformWhiteAndGray) {
    const PreprocessConfig cfg;
    for (auto [v, want] : {std::pair{1.0, 0.60}, std::pair{0.5, 0.50}}) {
        const GrayImage out = preprocess(uniform(300, 260, v, v, v), cfg);
        ASSERT_EQ(out.width, 224u);
        ASSERT_EQ(out.height, 224u);
        for (double p : out.pixels) EXPECT_NEAR(p, want, 1e-9);
    }
}

TEST(Preprocess, MatchesOpenCvReferencePipeline) {
    const RgbImage photo = random_photo(512, 384, 3);
    const PreprocessConfig cfg;
    const GrayImage ours = preprocess(photo, cfg);

    // Reference: cv::resize (bilinear) on the shorter side, crop, BT.601, contrast.
    cv::Mat src(384, 512, CV_64FC3);
    for (int y = 0; y < 384; ++y)
        for (int x = 0; x < 512; ++x)
            for (int c = 0; c < 3; ++c)
                src.at<cv::Vec3d>(y, x)[c] = photo.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                                      static_cast<std::size_t>(c));
    cv::Mat resized;
    cv::resize(src, resized, cv::Size(341, 256), 0, 0, cv::INTER_LINEAR);
    const int ox = (341 - 224) / 2, oy = (256 - 224) / 2;
    std::vector<int> hist_ours(256, 0), hist_ref(256, 0);
    double worst = 0;
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x) {
            const cv::Vec3d p = resized.at<cv::Vec3d>(y + oy, x + ox);
            const double g = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            const double ref = 0.5 + 0.2 * (g - 0.5);
            const double got = ours.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
            worst = std::max(worst, std::abs(got - ref));
            // Histogram of the pre-contrast luminance in 8-bit levels.
            ++hist_ref[static_cast<std::size_t>(std::clamp(std::lround(g * 255), 0L, 255L))];
            ++hist_ours[static_cast<std::size_t>(std::clamp(std::lround((0.5 + (got - 0.5) / 0.2) * 255), 0L, 255L))];
        }
    EXPECT_LE(worst, 0.2 / 255.0);
    // Each bin may only exchange mass with its neighbours.
    int cum_diff = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        cum_diff += hist_ours[i] - hist_ref[i];
        EXPECT_LE(std::abs(cum_diff), 224 * 224 / 50) << "bin " << i;
    }
}

TEST(Preprocess, ResizeShortSideAndCropOffsets) {
    const RgbImage r = resize_short_side(random_photo(512, 384, 1), 256);
    EXPECT_EQ(r.width, 341u);
    EXPECT_EQ(r.height, 256u);
    RgbImage marked(10, 7);
    for (std::size_t y = 0; y < 7; ++y)
        for (std::size_t x = 0; x < 10; ++x) marked.at(x, y, 0) = static_cast<double>(10 * y + x);
    const RgbImage c = center_crop(marked, 4);
    EXPECT_EQ(c.at(0, 0, 0), 10.0 * 1 + 3);  // offsets floor(6/2)=3, floor(3/2)=1
}

TEST(Preprocess, TooSmallAfterResizeIsRejected) {
    PreprocessConfig cfg;
    cfg.resize_short_side = 0;
    EXPECT_THROW(preprocess(uniform(200, 300, 0.3, 0.3, 0.3), cfg), ValidationError);
    cfg.resize_short_side = 200;
    EXPECT_THROW(preprocess(uniform(600, 600, 0.3, 0.3, 0.3), cfg), ValidationError);
    RgbImage broken(4, 4);
    broken.pixels.resize(5);
    EXPECT_THROW(to_grayscale(broken, cfg.grayscale_weights), ValidationError);
}

TEST(Preprocess, ConfigValidation) {
    PreprocessConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.contrast_factor = 0.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.contrast_factor = 1.5;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.contrast_pivot = 1.1;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.grayscale_weights = {0.3, 0.3, 0.3};
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.grayscale_weights = {1.2, -0.1, -0.1};
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Grayscale, WeightedSum) {
    const std::array<double, 3> bt601 = {0.299, 0.587, 0.114};
    EXPECT_NEAR(to_grayscale(uniform(1, 1, 1, 0, 0), bt601).pixels[0], 0.299, 1e-15);
    EXPECT_NEAR(to_grayscale(uniform(1, 1, 0.2, 0.5, 0.9), bt601).pixels[0], 0.4559, 1e-12);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        double a = u(rng), b = u(rng) * (1 - a);
        const std::array<double, 3> w = {a, b, 1 - a - b};
        const double v = u(rng);
        EXPECT_NEAR(to_grayscale(uniform(2, 2, v, v, v), w).pixels[3], v, 1e-12);
    }
}

TEST(Contrast, FormulaAndIdentity) {
    GrayImage g(2, 1);
    g.pixels = {1.0, 0.0};
    const GrayImage r = reduce_contrast(g, 0.2, 0.5);
    EXPECT_NEAR(r.pixels[0], 0.6, 1e-15);
    EXPECT_NEAR(r.pixels[1], 0.4, 1e-15);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    GrayImage rnd(16, 16);
    for (double& p : rnd.pixels) p = u(rng);
    EXPECT_EQ(reduce_contrast(rnd, 1.0, 0.5), rnd);
    for (double p : reduce_contrast(rnd, 0.2, 0.5).pixels) {
        EXPECT_GE(p, 0.4);
        EXPECT_LE(p, 0.6);
    }
}

TEST(Contrast, AffineInInput) {
    // reduce(a I + b) = a reduce(I) + (1 - a) pivot (1 - f) + f b
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 50; ++rep) {
        GrayImage img(8, 8);
        for (double& p : img.pixels) p = u(rng);
        const double a = u(rng), b = 0.5 * u(rng), f = 0.05 + 0.95 * u(rng), pivot = u(rng);
        GrayImage scaled = img;
        for (double& p : scaled.pixels) p = a * p + b;
        const GrayImage lhs = reduce_contrast(scaled, f, pivot);
        const GrayImage base = reduce_contrast(img, f, pivot);
        for (std::size_t i = 0; i < img.size(); ++i)
            EXPECT_NEAR(lhs.pixels[i], a * base.pixels[i] + (1 - a) * pivot * (1 - f) + f * b, 1e-12);
    }
}

TEST(Preprocess, CroppedGrayInputOnlyChangesContrast) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    GrayImage img(224, 224);
    for (double& p : img.pixels) p = u(rng);
    PreprocessConfig cfg;
    cfg.resize_short_side = 0;
    const GrayImage out = preprocess_gray(img, cfg);
    const GrayImage want = reduce_contrast(img, 0.2, 0.5);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.pixels[i], want.pixels[i], kPixelQuantum);
}

TEST(Preprocess, OutputIsOnTheGrid) {
    const GrayImage out = preprocess(random_photo(300, 300, 8), PreprocessConfig{});
    for (double p : out.pixels) EXPECT_EQ(p, snap_to_grid(p));
}

TEST(Io, Gray16RoundTrip) {
    cbm::testing::TempDir dir;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    GrayImage img(31, 17);
    for (double& p : img.pixels) p = u(rng);
    save_gray16(dir.path() / "a.png", img);
    const GrayImage back = load_gray16(dir.path() / "a.png");
    EXPECT_EQ(back, quantize16(img));
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.pixels[i] - img.pixels[i]), 0.5 / 65535 + 1e-15);
    EXPECT_THROW(load_gray16(dir.path() / "missing.png"), IoError);
}

TEST(Io, Rgb8RoundTrip) {
    cbm::testing::TempDir dir;
    RgbImage img(5, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 7 % 256) / 255.0;
    save_rgb8(dir.path() / "c.png", img);
    const RgbImage back = load_rgb(dir.path() / "c.png");
    ASSERT_EQ(back.width, 5u);
    ASSERT_EQ(back.height, 3u);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-12);
}
