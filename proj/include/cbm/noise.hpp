#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbm/imaging.hpp"

namespace cbm {

inline constexpr std::size_t kStimulusSize = 224;
inline constexpr double kNyquist = kStimulusSize / 2.0;  // cycles/image
inline constexpr std::size_t kNumBands = 7;
inline constexpr std::size_t kNumSdLevels = 5;  // level 0 is the noise-free condition
inline constexpr std::size_t kNumConditions = (kNumSdLevels - 1) * kNumBands + 1;
inline constexpr double kLowestBandCenter = 1.75;  // cycles/image; center_b = 1.75 * 2^b

/// Nonzero noise SDs, ascending; level k (1..4) uses kDefaultSdLadder[k - 1].
inline constexpr std::array<double, kNumSdLevels - 1> kDefaultSdLadder = {0.02, 0.04, 0.08, 0.16};

enum class BandConvention {
    geometric_octave,   // [c / sqrt2, c * sqrt2]
    lower_edge_octave,  // [c, 2c]
};

std::string_view to_string(BandConvention c);
BandConvention parse_band_convention(std::string_view s);

struct FrequencyBand {
    double center = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    BandConvention convention = BandConvention::geometric_octave;
    bool truncated = false;  // hi was cut back to Nyquist

    /// Radial frequency r (cycles/image) is in band iff lo <= r < hi, with
    /// hi itself included when the band was truncated at Nyquist.
    bool contains(double radial_frequency) const;
};

/// Octave band around `center`; hi is truncated to Nyquist. Rejects centers
/// at or below 0 or above Nyquist.
FrequencyBand band_edges(double center, BandConvention convention);

double band_center(std::size_t band_index);
FrequencyBand band_for_index(std::size_t band_index, BandConvention convention);

/// One of the 29 (SD level x band) cells. The noise-free cell has no band.
struct NoiseCondition {
    std::size_t sd_level = 0;               // 0..4, 0 means no noise
    std::optional<std::size_t> band_index;  // 0..6, empty iff sd_level == 0

    bool is_noise_free() const { return sd_level == 0; }
    double sd(const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder) const;

    /// Dense id 0..28: 0 is noise-free, then level-major (level 1 bands 0..6, ...).
    std::size_t id() const;
    static NoiseCondition from_id(std::size_t id);

    /// Throws ValidationError unless the pair names a real cell.
    void validate() const;

    friend bool operator==(const NoiseCondition&, const NoiseCondition&) = default;
};

std::vector<NoiseCondition> all_conditions();

/// Maps an SD value back to its ladder level (0 for sd == 0). Throws when the
/// value is not on the ladder (tolerance 1e-9).
std::size_t sd_level_of(double sd, const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);

struct NoiseField {
    GrayImage pixels;
    NoiseCondition condition;
    double target_sd = 0.0;
    std::uint64_t seed = 0;
};

/// Seeded white Gaussian samples, N(0,1). Portable: mt19937_64 + Box-Muller.
std::vector<double> white_gaussian(std::uint64_t seed, std::size_t count);

/// White Gaussian field filtered to a hard radial annulus, mean removed and
/// rescaled so the population SD equals `target_sd`, then snapped to the
/// pixel grid. `target_sd == 0` yields the zero field.
GrayImage bandpass_noise(std::uint64_t seed, std::size_t size, const FrequencyBand& band, double target_sd);

/// Same white field filtered into each band in turn (unit SD, no rescale
/// snapping); used to study band orthogonality and reconstruction.
GrayImage bandpass_filter(const GrayImage& field, const FrequencyBand& band);

NoiseField make_noise_field(std::uint64_t seed, const NoiseCondition& condition, BandConvention convention,
                            const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);

struct SpectrumReport {
    double in_band_power_fraction = 0.0;
    double total_power = 0.0;            // sum of squared deviations from the mean
    double peak_radial_frequency = 0.0;  // cycles/image
};

/// Power spectrum of the mean-removed field, split by `band`.
SpectrumReport verify_spectrum(const GrayImage& field, const FrequencyBand& band);

struct ClippingResult {
    GrayImage image;
    std::size_t adjusted_pixels = 0;
};

/// Moves each pixel the minimum distance so that pixel + noise lands in [0,1].
ClippingResult prevent_clipping(const GrayImage& image, const GrayImage& noise);

/// Pixelwise sum. Throws std::logic_error if any sum leaves [0,1].
GrayImage mask(const GrayImage& image, const GrayImage& noise);

/// Stable 64-bit mix used for per-stimulus seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stable_hash(std::uint64_t master_seed, std::string_view key);

}  // namespace cbm
