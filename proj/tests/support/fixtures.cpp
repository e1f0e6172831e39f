#include "fixtures.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <sys/wait.h>

#include "cbm/imaging.hpp"

namespace fs = std::filesystem;

namespace cbm::testing {

TempDir::TempDir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        path_ = fs::temp_directory_path() / (tag + "_" + std::to_string(rng() % 1'000'000'000));
        if (fs::create_directory(path_)) break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::vector<LabeledImage> write_image_tree(const fs::path& root, std::size_t per_category, std::uint64_t seed,
                                           int width, int height) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabeledImage> out;
    for (std::size_t c = 0; c < kNumCategories; ++c) {
        const fs::path dir = root / std::string(kCategoryLabels[c]);
        fs::create_directories(dir);
        for (std::size_t i = 0; i < per_category; ++i) {
            RgbImage img;
            img.width = static_cast<std::size_t>(width);
            img.height = static_cast<std::size_t>(height);
            img.pixels.resize(img.width * img.height * 3);
            const double fx = 1 + 6 * u(rng), fy = 1 + 6 * u(rng), ph = 6.28 * u(rng);
            for (std::size_t y = 0; y < img.height; ++y)
                for (std::size_t x = 0; x < img.width; ++x)
                    for (std::size_t k = 0; k < 3; ++k) {
                        const double v = 0.5 + 0.35 * std::sin(fx * x / width * 6.28 + fy * y / height * 6.28 + ph + k) +
                                         0.1 * (u(rng) - 0.5);
                        img.pixels[(y * img.width + x) * 3 + k] = std::clamp(v, 0.0, 1.0);
                    }
            char name[32];
            std::snprintf(name, sizeof name, "img_%03zu.png", i);
            save_rgb8(dir / name, img);
            out.push_back({dir / name, Category{c}});
        }
    }
    return out;
}

StimulusManifest synthetic_manifest(std::size_t per_condition, std::uint64_t seed) {
    std::vector<LabeledImage> images;
    const std::size_t n = per_condition * kNumConditions;
    for (std::size_t i = 0; i < n; ++i) {
        char name[48];
        std::snprintf(name, sizeof name, "/nonexistent/img_%06zu.png", i);
        images.push_back({name, Category{i % kNumCategories}});
    }
    return assign_conditions(images, seed, n);
}

fs::path cbm_binary() { return CBM_TOOL_PATH; }
fs::path observer_binary() { return CBM_OBSERVER_PATH; }

CommandResult run_command(const std::string& command_line) {
    CommandResult r;
    FILE* p = ::popen((command_line + " 2>&1").c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

}  // namespace cbm::testing
