#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbm/categories.hpp"
#include "cbm/imaging.hpp"
#include "cbm/noise.hpp"

namespace cbm {

struct LabeledImage {
    std::filesystem::path path;
    Category category;
};

struct StimulusSettings {
    PreprocessConfig preprocess;
    BandConvention convention = BandConvention::geometric_octave;
    std::array<double, kNumSdLevels - 1> sd_ladder = kDefaultSdLadder;

    nlohmann::json to_json() const;
    static StimulusSettings from_json(const nlohmann::json& j);
};

struct ManifestEntry {
    std::string stimulus_id;
    std::filesystem::path source_image_path;
    Category category;
    NoiseCondition condition;
    std::uint64_t noise_seed = 0;
};

struct StimulusManifest {
    std::uint64_t master_seed = 0;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> presentation_order;
    StimulusSettings settings;

    const ManifestEntry& find(const std::string& stimulus_id) const;
    const ManifestEntry* find_if_present(const std::string& stimulus_id) const;

    std::array<std::size_t, kNumConditions> condition_counts() const;
    std::array<std::size_t, kNumCategories> category_counts() const;

    nlohmann::json to_json() const;
    /// Structural validation; throws ValidationError naming the first problem.
    static StimulusManifest from_json(const nlohmann::json& j);

    void save(const std::filesystem::path& path) const;
    static StimulusManifest load(const std::filesystem::path& path);

    /// Deterministic serialization (2-space JSON + trailing newline).
    std::string dump() const;
};

/// Directory with one subfolder per category label, or a CSV of path,category.
std::vector<LabeledImage> load_image_list(const std::filesystem::path& images);
std::vector<LabeledImage> load_labels_csv(const std::filesystem::path& csv, const std::filesystem::path& base);

/// Picks `n` images (all when n == 0) spread evenly over categories, deals the
/// 29 conditions round-robin over shuffled blocks, and shuffles the
/// presentation order. Pure function of (images, master_seed, n).
StimulusManifest assign_conditions(const std::vector<LabeledImage>& images, std::uint64_t master_seed,
                                   std::size_t n = 0, const StimulusSettings& settings = {});

struct RenderMetadata {
    NoiseCondition condition;
    std::uint64_t noise_seed = 0;
    std::size_t clipping_adjusted_pixels = 0;
};

struct RenderedStimulus {
    GrayImage image;
    GrayImage preprocessed;  // what the noise was added to, before clipping prevention
    GrayImage noise;
    RenderMetadata metadata;
};

/// preprocess -> bandpass_noise -> prevent_clipping -> mask.
RenderedStimulus render_stimulus(const ManifestEntry& entry, const StimulusSettings& settings);
RenderedStimulus render_stimulus(const ManifestEntry& entry, const RgbImage& source, const StimulusSettings& settings);

struct ExportSummary {
    std::size_t images_written = 0;
    std::size_t stimuli_with_clipping_adjustment = 0;
};

/// Writes <out_dir>/stimuli/<id>.png (16-bit) for every entry and
/// <out_dir>/manifest.json. Rendering runs on `threads` workers (0 = hardware).
ExportSummary export_set(const StimulusManifest& manifest, const std::filesystem::path& out_dir,
                         unsigned threads = 0, const nlohmann::json& provenance = nullptr);

std::filesystem::path stimulus_png_path(const std::filesystem::path& out_dir, const std::string& stimulus_id);

}  // namespace cbm
