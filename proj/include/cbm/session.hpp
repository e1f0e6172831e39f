#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cbm/error.hpp"
#include "cbm/records.hpp"
#include "cbm/stimuli.hpp"
#include "cbm/transport.hpp"

namespace cbm {

struct BlockPlan {
    std::size_t training_trials = 50;
    std::size_t test_blocks = 5;
    std::size_t trials_per_test_block = 210;
    bool feedback_in_training = true;

    std::size_t total() const { return training_trials + test_blocks * trials_per_test_block; }
    Block block_of(std::size_t trial_index) const;

    /// Throws ValidationError when the plan needs more stimuli than exist.
    void validate(std::size_t manifest_size) const;

    nlohmann::json to_json() const;
    static BlockPlan from_json(const nlohmann::json& j);
};

enum class StimulusTransfer { shared_path, inline_png };

struct SessionOptions {
    std::filesystem::path responses_dir;      // <dir>/<observer_id>.csv
    std::filesystem::path stimuli_dir;        // where <id>.png live (export_set layout)
    std::chrono::milliseconds trial_timeout{60'000};  // <= 0 means unlimited
    StimulusTransfer transfer = StimulusTransfer::shared_path;
    std::size_t stop_after = 0;               // stop after this many new trials (0 = run to the end)
    bool sync_writes = true;
};

/// Thrown when the observer times out or disconnects mid-session. The
/// records written so far stay on disk; rerunning resumes at `next_trial`.
class SessionInterrupted : public ProtocolError {
public:
    SessionInterrupted(const std::string& what, std::size_t next_trial)
        : ProtocolError(what), next_trial_(next_trial) {}
    std::size_t next_trial() const noexcept { return next_trial_; }

private:
    std::size_t next_trial_;
};

struct SessionResult {
    ObserverDescriptor observer;
    std::filesystem::path responses_path;
    std::size_t resumed_from = 0;
    std::vector<ResponseRecord> records;  // everything on disk for this observer, in order
    bool complete = false;
};

/// Hello handshake, then one stimulus/response exchange per planned trial in
/// presentation order, appending each record as it arrives. Resumes from the
/// observer's existing response file.
SessionResult run_session(const StimulusManifest& manifest, ObserverEndpoint& endpoint, const BlockPlan& plan,
                          const SessionOptions& options);

ResponseRecord make_record(const std::string& observer_id, const ManifestEntry& entry,
                           std::optional<Category> response, Block block);

struct ExclusionReport {
    std::vector<std::string> kept;
    std::vector<std::string> excluded;
    std::vector<std::string> no_baseline_trials;  // flagged, neither kept nor excluded
    std::map<std::string, double> baseline_accuracy;
};

/// Keep an observer iff its noise-free test-block accuracy is >= threshold.
ExclusionReport exclude_low_performers(const std::vector<ResponseRecord>& records, double threshold = 0.5);

}  // namespace cbm
