#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cbm/records.hpp"
#include "cbm/stimuli.hpp"

namespace cbm::testing {

/// Fresh empty directory under the system temp dir, removed by the destructor.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "cbm");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Writes <root>/<label>/img_NNN.png for every category: smooth random
/// gratings plus a little pixel noise, `width` x `height` RGB.
std::vector<LabeledImage> write_image_tree(const std::filesystem::path& root, std::size_t per_category,
                                           std::uint64_t seed, int width = 64, int height = 48);

/// Manifest over placeholder image paths (never rendered), for session and
/// analysis tests. `per_condition` stimuli per condition.
StimulusManifest synthetic_manifest(std::size_t per_condition, std::uint64_t seed);

/// Path of the built tool binaries (set by CMake).
std::filesystem::path cbm_binary();
std::filesystem::path observer_binary();

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

/// Runs a shell command line, capturing combined output.
CommandResult run_command(const std::string& command_line);

}  // namespace cbm::testing
