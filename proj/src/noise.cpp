#include "cbm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fftw3.h>

#include "cbm/error.hpp"

namespace cbm {

std::string_view to_string(BandConvention c) {
    return c == BandConvention::geometric_octave ? "geometric_octave" : "lower_edge_octave";
}

BandConvention parse_band_convention(std::string_view s) {
    if (s == "geometric_octave") return BandConvention::geometric_octave;
    if (s == "lower_edge_octave") return BandConvention::lower_edge_octave;
    throw ValidationError("unknown band convention '" + std::string(s) + "'");
}

bool FrequencyBand::contains(double r) const {
    if (r <= 0.0 || r < lo) return false;
    return r < hi || (truncated && r <= hi);
}

FrequencyBand band_edges(double center, BandConvention convention) {
    if (!(center > 0.0)) throw ValidationError("band center must be positive");
    if (center > kNyquist) throw ValidationError("band center " + std::to_string(center) + " is beyond Nyquist");
    FrequencyBand b;
    b.center = center;
    b.convention = convention;
    if (convention == BandConvention::geometric_octave) {
        b.lo = center / std::numbers::sqrt2;
        b.hi = center * std::numbers::sqrt2;
    } else {
        b.lo = center;
        b.hi = 2.0 * center;
    }
    if (b.hi > kNyquist) {
        b.hi = kNyquist;
        b.truncated = true;
    }
    if (!(b.lo < b.hi)) throw ValidationError("degenerate band after Nyquist truncation");
    return b;
}

double band_center(std::size_t band_index) {
    if (band_index >= kNumBands) throw ValidationError("band index out of range");
    return kLowestBandCenter * std::ldexp(1.0, static_cast<int>(band_index));
}

FrequencyBand band_for_index(std::size_t band_index, BandConvention convention) {
    return band_edges(band_center(band_index), convention);
}

double NoiseCondition::sd(const std::array<double, kNumSdLevels - 1>& ladder) const {
    return sd_level == 0 ? 0.0 : ladder.at(sd_level - 1);
}

std::size_t NoiseCondition::id() const {
    validate();
    return sd_level == 0 ? 0 : 1 + (sd_level - 1) * kNumBands + *band_index;
}

NoiseCondition NoiseCondition::from_id(std::size_t id) {
    if (id >= kNumConditions) throw ValidationError("condition id out of range");
    if (id == 0) return {};
    return {1 + (id - 1) / kNumBands, (id - 1) % kNumBands};
}

void NoiseCondition::validate() const {
    if (sd_level >= kNumSdLevels) throw ValidationError("sd level out of range");
    if (sd_level == 0 && band_index) throw ValidationError("the noise-free condition has no band");
    if (sd_level != 0 && !band_index) throw ValidationError("a noisy condition needs a band");
    if (band_index && *band_index >= kNumBands) throw ValidationError("band index out of range");
}

std::vector<NoiseCondition> all_conditions() {
    std::vector<NoiseCondition> out;
    for (std::size_t id = 0; id < kNumConditions; ++id) out.push_back(NoiseCondition::from_id(id));
    return out;
}

std::size_t sd_level_of(double sd, const std::array<double, kNumSdLevels - 1>& ladder) {
    if (std::abs(sd) <= 1e-9) return 0;
    for (std::size_t i = 0; i < ladder.size(); ++i)
        if (std::abs(sd - ladder[i]) <= 1e-9) return i + 1;
    throw ValidationError("noise SD " + std::to_string(sd) + " is not on the SD ladder");
}

// ---------------------------------------------------------------------------
// FFT plumbing

namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftBuffer {
    explicit FftBuffer(std::size_t n) : data(fftw_alloc_complex(n)), size(n) {
        if (!data) throw std::bad_alloc();
    }
    ~FftBuffer() { fftw_free(data); }
    FftBuffer(const FftBuffer&) = delete;
    FftBuffer& operator=(const FftBuffer&) = delete;

    fftw_complex* data;
    std::size_t size;
};

/// In-place 2-D DFT. Plan creation is serialized (FFTW planners are not
/// thread-safe); execution is not.
void fft2d_inplace(FftBuffer& buf, std::size_t n, int sign) {
    fftw_plan plan;
    {
        std::lock_guard lock(plan_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf.data, buf.data, sign, FFTW_ESTIMATE);
    }
    if (!plan) throw std::runtime_error("FFTW planning failed");
    fftw_execute(plan);
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
}

double signed_frequency(std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

/// Radial frequency in cycles per image for bin (kx, ky) of an n x n DFT.
double radial_frequency(std::size_t kx, std::size_t ky, std::size_t n) {
    return std::hypot(signed_frequency(kx, n), signed_frequency(ky, n));
}

void require_square(const GrayImage& img) {
    if (img.width != img.height || img.width == 0) throw ValidationError("expected a non-empty square image");
}

double mean_of(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

double population_sd(const std::vector<double>& v) {
    const double m = mean_of(v);
    long double s = 0;
    for (double x : v) s += (x - m) * static_cast<long double>(x - m);
    return std::sqrt(static_cast<double>(s / static_cast<long double>(v.size())));
}

}  // namespace

std::vector<double> white_gaussian(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    // 53-bit uniform in (0, 1]; never 0 so the log is finite.
    auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53; };
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; i += 2) {
        const double radius = std::sqrt(-2.0 * std::log(uniform()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        out[i] = radius * std::cos(angle);
        if (i + 1 < count) out[i + 1] = radius * std::sin(angle);
    }
    return out;
}

GrayImage bandpass_filter(const GrayImage& field, const FrequencyBand& band) {
    require_square(field);
    const std::size_t n = field.width;
    FftBuffer buf(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        buf.data[i][0] = field.pixels[i];
        buf.data[i][1] = 0.0;
    }
    fft2d_inplace(buf, n, FFTW_FORWARD);
    for (std::size_t ky = 0; ky < n; ++ky)
        for (std::size_t kx = 0; kx < n; ++kx)
            if (!band.contains(radial_frequency(kx, ky, n))) {
                buf.data[ky * n + kx][0] = 0.0;
                buf.data[ky * n + kx][1] = 0.0;
            }
    fft2d_inplace(buf, n, FFTW_BACKWARD);
    GrayImage out(n, n);
    const double scale = 1.0 / static_cast<double>(n * n);
    for (std::size_t i = 0; i < n * n; ++i) out.pixels[i] = buf.data[i][0] * scale;
    return out;
}

GrayImage bandpass_noise(std::uint64_t seed, std::size_t size, const FrequencyBand& band, double target_sd) {
    if (!(target_sd >= 0.0)) throw ValidationError("target SD must be non-negative");
    if (size == 0) throw ValidationError("noise field size must be positive");
    if (!(band.lo < band.hi)) throw ValidationError("degenerate frequency band");
    if (target_sd == 0.0) return GrayImage(size, size, 0.0);

    GrayImage white(size, size);
    white.pixels = white_gaussian(seed, size * size);
    GrayImage field = bandpass_filter(white, band);

    const double m = mean_of(field.pixels);
    for (double& p : field.pixels) p -= m;
    const double sd = population_sd(field.pixels);
    if (!(sd > 0.0)) throw ValidationError("band contains no frequency bins at this size");
    const double k = target_sd / sd;
    for (double& p : field.pixels) p *= k;
    snap_to_grid(field);
    return field;
}

NoiseField make_noise_field(std::uint64_t seed, const NoiseCondition& condition, BandConvention convention,
                            const std::array<double, kNumSdLevels - 1>& ladder) {
    condition.validate();
    NoiseField f;
    f.condition = condition;
    f.seed = seed;
    f.target_sd = condition.sd(ladder);
    if (condition.is_noise_free()) {
        f.pixels = GrayImage(kStimulusSize, kStimulusSize, 0.0);
    } else {
        f.pixels = bandpass_noise(seed, kStimulusSize, band_for_index(*condition.band_index, convention), f.target_sd);
    }
    return f;
}

SpectrumReport verify_spectrum(const GrayImage& field, const FrequencyBand& band) {
    require_square(field);
    const std::size_t n = field.width;
    const double m = mean_of(field.pixels);
    FftBuffer buf(n * n);
    long double deviations = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
        const double d = field.pixels[i] - m;
        deviations += static_cast<long double>(d) * d;
        buf.data[i][0] = d;
        buf.data[i][1] = 0.0;
    }
    if (deviations == 0) throw ValidationError("spectrum of a constant field is undefined");
    fft2d_inplace(buf, n, FFTW_FORWARD);

    long double total = 0, inside = 0;
    double peak_power = -1.0, peak_r = 0.0;
    for (std::size_t ky = 0; ky < n; ++ky)
        for (std::size_t kx = 0; kx < n; ++kx) {
            const double re = buf.data[ky * n + kx][0], im = buf.data[ky * n + kx][1];
            const double power = re * re + im * im;
            const double r = radial_frequency(kx, ky, n);
            total += power;
            if (band.contains(r)) inside += power;
            if (power > peak_power) {
                peak_power = power;
                peak_r = r;
            }
        }
    SpectrumReport rep;
    rep.total_power = static_cast<double>(total / static_cast<long double>(n * n));  // Parseval
    rep.in_band_power_fraction = std::clamp(static_cast<double>(inside / total), 0.0, 1.0);
    rep.peak_radial_frequency = peak_r;
    return rep;
}

namespace {

void check_same_shape(const GrayImage& a, const GrayImage& b) {
    if (a.width != b.width || a.height != b.height) throw ValidationError("image and noise field differ in size");
}

}  // namespace

ClippingResult prevent_clipping(const GrayImage& image, const GrayImage& noise) {
    check_same_shape(image, noise);
    for (double v : noise.pixels)
        if (std::abs(v) > 1.0) throw ValidationError("noise sample beyond +-1; no image value avoids clipping");

    ClippingResult out{image, 0};
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double p = image.pixels[i];
        if (p < 0.0 || p > 1.0) throw ValidationError("image pixel outside [0,1]");
        const double n = noise.pixels[i];
        double adjusted = p;
        if (p + n > 1.0) {
            adjusted = 1.0 - n;
            while (adjusted + n > 1.0) adjusted = std::nextafter(adjusted, -1.0);
        } else if (p + n < 0.0) {
            adjusted = -n;
            while (adjusted + n < 0.0) adjusted = std::nextafter(adjusted, 2.0);
        }
        if (adjusted != p) {
            out.image.pixels[i] = adjusted;
            ++out.adjusted_pixels;
        }
    }
    return out;
}

GrayImage mask(const GrayImage& image, const GrayImage& noise) {
    check_same_shape(image, noise);
    GrayImage out(image.width, image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double s = image.pixels[i] + noise.pixels[i];
        if (s < 0.0 || s > 1.0) throw std::logic_error("masked pixel outside [0,1]: clipping prevention was skipped");
        out.pixels[i] = s;
    }
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stable_hash(std::uint64_t master_seed, std::string_view key) {
    // FNV-1a over the key, then mixed with the seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(master_seed) ^ h);
}

}  // namespace cbm
