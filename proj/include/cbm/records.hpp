#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cbm/categories.hpp"
#include "cbm/noise.hpp"

namespace cbm {

enum class ObserverKind { human, network };
std::string_view to_string(ObserverKind k);
ObserverKind parse_observer_kind(std::string_view s);

struct ObserverDescriptor {
    std::string observer_id;
    ObserverKind kind = ObserverKind::network;
    std::map<std::string, std::string> tags;  // e.g. adversarial_training_eps -> "3"
};

enum class Block { training, test };
std::string_view to_string(Block b);
Block parse_block(std::string_view s);

/// One decision by one observer on one stimulus. `response` is empty when the
/// observer reported a per-trial error; such trials count as incorrect.
struct ResponseRecord {
    std::string observer_id;
    std::string stimulus_id;
    NoiseCondition condition;
    Category true_category;
    std::optional<Category> response;
    bool correct = false;
    Block block = Block::test;
    std::string timestamp;  // ISO-8601 UTC

    friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

inline constexpr std::string_view kResponseCsvHeader =
    "observer_id,stimulus_id,block,sd,band_index,true_category,response_category,correct,timestamp";

std::string to_csv_line(const ResponseRecord& r,
                        const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);
ResponseRecord parse_csv_line(const std::string& line,
                              const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);

/// Reads a response CSV. A truncated final line (no newline) is ignored.
std::vector<ResponseRecord> read_responses(const std::filesystem::path& path,
                                           const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);

/// Append-only response log. Each record is a single write(2) on an O_APPEND
/// descriptor followed by fdatasync, so a crash leaves at most one partial
/// line, which open() trims.
class ResponseLog {
public:
    ResponseLog(const std::filesystem::path& path,
                const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder, bool sync = true);
    ~ResponseLog();

    ResponseLog(const ResponseLog&) = delete;
    ResponseLog& operator=(const ResponseLog&) = delete;

    void append(const ResponseRecord& r);
    const std::vector<ResponseRecord>& existing() const { return existing_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::array<double, kNumSdLevels - 1> ladder_;
    int fd_ = -1;
    bool sync_;
    std::vector<ResponseRecord> existing_;
};

std::string utc_timestamp();

/// Quoting-aware CSV helpers shared by every CSV reader and writer here.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

}  // namespace cbm
