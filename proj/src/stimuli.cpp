#include "cbm/stimuli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "cbm/error.hpp"
#include "cbm/provenance.hpp"
#include "cbm/records.hpp"

namespace cbm {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// settings

json StimulusSettings::to_json() const {
    return {
        {"preprocess",
         {{"resize_short_side", preprocess.resize_short_side},
          {"crop", preprocess.crop},
          {"contrast_factor", preprocess.contrast_factor},
          {"contrast_pivot", preprocess.contrast_pivot},
          {"grayscale_weights", preprocess.grayscale_weights},
          {"resampling", "bilinear"}}},
        {"noise",
         {{"band_convention", std::string(to_string(convention))},
          {"sd_ladder", sd_ladder},
          {"size", kStimulusSize},
          {"filter", "hard_radial_annulus"},
          {"sd_definition", "post_filter_population_sd"}}},
    };
}

StimulusSettings StimulusSettings::from_json(const json& j) {
    StimulusSettings s;
    try {
        if (j.contains("preprocess")) {
            const auto& p = j.at("preprocess");
            s.preprocess.resize_short_side = p.value("resize_short_side", s.preprocess.resize_short_side);
            s.preprocess.crop = p.value("crop", s.preprocess.crop);
            s.preprocess.contrast_factor = p.value("contrast_factor", s.preprocess.contrast_factor);
            s.preprocess.contrast_pivot = p.value("contrast_pivot", s.preprocess.contrast_pivot);
            if (p.contains("grayscale_weights"))
                s.preprocess.grayscale_weights = p.at("grayscale_weights").get<std::array<double, 3>>();
            if (p.contains("resampling") && p.at("resampling") != "bilinear")
                throw ValidationError("only bilinear resampling is supported");
        }
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            if (n.contains("band_convention"))
                s.convention = parse_band_convention(n.at("band_convention").get<std::string>());
            if (n.contains("sd_ladder")) s.sd_ladder = n.at("sd_ladder").get<std::array<double, kNumSdLevels - 1>>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("stimulus settings: ") + e.what());
    }
    s.preprocess.validate();
    if (s.preprocess.crop != kStimulusSize)
        throw ValidationError("stimulus crop must be " + std::to_string(kStimulusSize));
    for (std::size_t i = 0; i < s.sd_ladder.size(); ++i) {
        if (!(s.sd_ladder[i] > 0.0)) throw ValidationError("sd_ladder values must be positive");
        if (i && !(s.sd_ladder[i] > s.sd_ladder[i - 1])) throw ValidationError("sd_ladder must be ascending");
    }
    return s;
}

// ---------------------------------------------------------------------------
// manifest

const ManifestEntry* StimulusManifest::find_if_present(const std::string& stimulus_id) const {
    // Entries are sorted by id when built by assign_conditions, but loaded
    // manifests need not be.
    for (const auto& e : entries)
        if (e.stimulus_id == stimulus_id) return &e;
    return nullptr;
}

const ManifestEntry& StimulusManifest::find(const std::string& stimulus_id) const {
    if (const auto* e = find_if_present(stimulus_id)) return *e;
    throw ValidationError("unknown stimulus_id '" + stimulus_id + "'");
}

std::array<std::size_t, kNumConditions> StimulusManifest::condition_counts() const {
    std::array<std::size_t, kNumConditions> c{};
    for (const auto& e : entries) ++c[e.condition.id()];
    return c;
}

std::array<std::size_t, kNumCategories> StimulusManifest::category_counts() const {
    std::array<std::size_t, kNumCategories> c{};
    for (const auto& e : entries) ++c[e.category.index];
    return c;
}

namespace {

json condition_to_json(const NoiseCondition& c, const StimulusSettings& s) {
    json j = {{"sd", c.sd(s.sd_ladder)}, {"sd_level", c.sd_level}};
    if (c.band_index) {
        const FrequencyBand b = band_for_index(*c.band_index, s.convention);
        j["band_index"] = *c.band_index;
        j["band_center"] = b.center;
        j["band_lo"] = b.lo;
        j["band_hi"] = b.hi;
    } else {
        j["band_index"] = nullptr;
    }
    return j;
}

NoiseCondition condition_from_json(const json& j) {
    NoiseCondition c;
    c.sd_level = j.at("sd_level").get<std::size_t>();
    if (!j.at("band_index").is_null()) c.band_index = j.at("band_index").get<std::size_t>();
    c.validate();
    return c;
}

}  // namespace

json StimulusManifest::to_json() const {
    json es = json::array();
    for (const auto& e : entries) {
        es.push_back({{"stimulus_id", e.stimulus_id},
                      {"source_image_path", e.source_image_path.generic_string()},
                      {"category", std::string(e.category.label())},
                      {"condition", condition_to_json(e.condition, settings)},
                      {"noise_seed", e.noise_seed}});
    }
    return {{"schema_version", 1},
            {"master_seed", master_seed},
            {"config_snapshot", settings.to_json()},
            {"entries", es},
            {"presentation_order", presentation_order}};
}

StimulusManifest StimulusManifest::from_json(const json& j) {
    StimulusManifest m;
    try {
        if (j.at("schema_version").get<int>() != 1) throw ValidationError("unsupported manifest schema_version");
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.settings = StimulusSettings::from_json(j.at("config_snapshot"));
        std::set<std::string> ids;
        std::set<std::uint64_t> seeds;
        for (const auto& e : j.at("entries")) {
            ManifestEntry me;
            me.stimulus_id = e.at("stimulus_id").get<std::string>();
            me.source_image_path = e.at("source_image_path").get<std::string>();
            me.category = parse_category(e.at("category").get<std::string>());
            me.condition = condition_from_json(e.at("condition"));
            me.noise_seed = e.at("noise_seed").get<std::uint64_t>();
            if (!ids.insert(me.stimulus_id).second) throw ValidationError("duplicate stimulus_id " + me.stimulus_id);
            if (!seeds.insert(me.noise_seed).second) throw ValidationError("duplicate noise_seed in " + me.stimulus_id);
            m.entries.push_back(std::move(me));
        }
        m.presentation_order = j.at("presentation_order").get<std::vector<std::string>>();
        std::set<std::string> seen;
        for (const auto& id : m.presentation_order) {
            if (!ids.count(id)) throw ValidationError("presentation_order names unknown stimulus " + id);
            if (!seen.insert(id).second) throw ValidationError("presentation_order repeats " + id);
        }
        if (seen.size() != ids.size()) throw ValidationError("presentation_order does not cover every entry");
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

std::string StimulusManifest::dump() const { return to_json().dump(2) + "\n"; }

void StimulusManifest::save(const fs::path& path) const { write_text(path, dump()); }

StimulusManifest StimulusManifest::load(const fs::path& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("manifest is not valid JSON (" + path.string() + "): " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// image lists

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<LabeledImage> load_labels_csv(const fs::path& csv, const fs::path& base) {
    std::ifstream in(csv);
    if (!in) throw IoError("cannot open labels CSV", csv.string());
    std::vector<LabeledImage> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (line_no == 1 && fields.size() == 2 && fields[0] == "path" && fields[1] == "category") continue;
        if (fields.size() != 2)
            throw ValidationError(csv.string() + ":" + std::to_string(line_no) + ": expected path,category");
        fs::path p = fields[0];
        if (p.is_relative()) p = base / p;
        out.push_back({p, parse_category(fields[1])});
    }
    return out;
}

std::vector<LabeledImage> load_image_list(const fs::path& images) {
    std::error_code ec;
    if (fs::is_regular_file(images, ec)) return load_labels_csv(images, images.parent_path());
    if (!fs::is_directory(images, ec)) throw IoError("image source is neither a directory nor a CSV", images.string());

    std::vector<LabeledImage> out;
    for (const auto& sub : fs::directory_iterator(images)) {
        if (!sub.is_directory()) continue;
        const Category c = parse_category(sub.path().filename().string());
        for (const auto& f : fs::directory_iterator(sub.path()))
            if (f.is_regular_file() && is_image_file(f.path())) out.push_back({f.path(), c});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    return out;
}

// ---------------------------------------------------------------------------
// assignment

namespace {

/// Unbiased integer in [0, bound) by rejection; portable across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

}  // namespace

StimulusManifest assign_conditions(const std::vector<LabeledImage>& images, std::uint64_t master_seed, std::size_t n,
                                   const StimulusSettings& settings) {
    if (images.empty()) throw ValidationError("no images to assign");
    if (n == 0) n = images.size();
    if (n < kNumConditions) throw ValidationError("need at least 29 stimuli, got " + std::to_string(n));
    if (n > images.size())
        throw ValidationError("requested " + std::to_string(n) + " stimuli but only " +
                              std::to_string(images.size()) + " images are available");

    std::array<std::vector<LabeledImage>, kNumCategories> pools;
    for (const auto& img : images) pools[img.category.index].push_back(img);
    for (std::size_t c = 0; c < kNumCategories; ++c)
        if (pools[c].empty())
            throw ValidationError("no images for category '" + std::string(kCategoryLabels[c]) + "'");

    std::mt19937_64 rng(splitmix64(master_seed));
    for (auto& pool : pools) {
        std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
        shuffle(pool, rng);
    }

    // Round-robin over categories keeps category counts within one of each other.
    std::vector<LabeledImage> chosen;
    chosen.reserve(n);
    std::array<std::size_t, kNumCategories> taken{};
    while (chosen.size() < n) {
        for (std::size_t c = 0; c < kNumCategories && chosen.size() < n; ++c)
            if (taken[c] < pools[c].size()) chosen.push_back(pools[c][taken[c]++]);
    }

    // Conditions dealt from consecutive shuffled blocks of all 29: counts differ by at most one.
    std::vector<std::size_t> conditions;
    conditions.reserve(n + kNumConditions);
    while (conditions.size() < n) {
        std::vector<std::size_t> block(kNumConditions);
        for (std::size_t i = 0; i < kNumConditions; ++i) block[i] = i;
        shuffle(block, rng);
        conditions.insert(conditions.end(), block.begin(), block.end());
    }

    StimulusManifest m;
    m.master_seed = master_seed;
    m.settings = settings;
    std::set<std::uint64_t> seeds;
    const int width = n >= 100000 ? 6 : 5;
    for (std::size_t i = 0; i < n; ++i) {
        ManifestEntry e;
        std::string num = std::to_string(i);
        e.stimulus_id = "stim_" + std::string(width - std::min<std::size_t>(num.size(), width), '0') + num;
        e.source_image_path = chosen[i].path;
        e.category = chosen[i].category;
        e.condition = NoiseCondition::from_id(conditions[i]);
        e.noise_seed = stable_hash(master_seed, e.stimulus_id);
        for (std::uint64_t salt = 1; !seeds.insert(e.noise_seed).second; ++salt)
            e.noise_seed = stable_hash(master_seed ^ salt, e.stimulus_id);
        m.presentation_order.push_back(e.stimulus_id);
        m.entries.push_back(std::move(e));
    }
    shuffle(m.presentation_order, rng);
    return m;
}

// ---------------------------------------------------------------------------
// rendering

RenderedStimulus render_stimulus(const ManifestEntry& entry, const RgbImage& source, const StimulusSettings& settings) {
    RenderedStimulus out;
    out.preprocessed = preprocess(source, settings.preprocess);
    out.metadata.condition = entry.condition;
    out.metadata.noise_seed = entry.noise_seed;
    if (entry.condition.is_noise_free()) {
        out.noise = GrayImage(out.preprocessed.width, out.preprocessed.height, 0.0);
        out.image = out.preprocessed;
        return out;
    }
    const FrequencyBand band = band_for_index(*entry.condition.band_index, settings.convention);
    out.noise = bandpass_noise(entry.noise_seed, out.preprocessed.width, band, entry.condition.sd(settings.sd_ladder));
    ClippingResult fixed = prevent_clipping(out.preprocessed, out.noise);
    out.metadata.clipping_adjusted_pixels = fixed.adjusted_pixels;
    out.image = mask(fixed.image, out.noise);
    return out;
}

RenderedStimulus render_stimulus(const ManifestEntry& entry, const StimulusSettings& settings) {
    return render_stimulus(entry, load_rgb(entry.source_image_path), settings);
}

fs::path stimulus_png_path(const fs::path& out_dir, const std::string& stimulus_id) {
    return out_dir / "stimuli" / (stimulus_id + ".png");
}

ExportSummary export_set(const StimulusManifest& manifest, const fs::path& out_dir, unsigned threads,
                         const json& provenance) {
    std::error_code ec;
    fs::create_directories(out_dir / "stimuli", ec);
    if (ec) throw IoError("cannot create output directory", (out_dir / "stimuli").string());

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, manifest.entries.size())));

    std::atomic<std::size_t> next{0}, written{0}, clipped{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= manifest.entries.size()) return;
            {
                std::lock_guard lock(failure_mutex);
                if (failure) return;
            }
            try {
                const auto& e = manifest.entries[i];
                RenderedStimulus r = render_stimulus(e, manifest.settings);
                save_gray16(stimulus_png_path(out_dir, e.stimulus_id), r.image);
                ++written;
                if (r.metadata.clipping_adjusted_pixels) ++clipped;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);

    json j = manifest.to_json();
    if (!provenance.is_null()) j["provenance"] = provenance;
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
    return {written.load(), clipped.load()};
}

}  // namespace cbm
