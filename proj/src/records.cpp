#include "cbm/records.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "cbm/error.hpp"

namespace cbm {

namespace fs = std::filesystem;

std::string_view to_string(ObserverKind k) { return k == ObserverKind::human ? "human" : "network"; }

ObserverKind parse_observer_kind(std::string_view s) {
    if (s == "human") return ObserverKind::human;
    if (s == "network") return ObserverKind::network;
    throw ValidationError("unknown observer kind '" + std::string(s) + "'");
}

std::string_view to_string(Block b) { return b == Block::training ? "training" : "test"; }

Block parse_block(std::string_view s) {
    if (s == "training") return Block::training;
    if (s == "test") return Block::test;
    throw ValidationError("unknown block '" + std::string(s) + "'");
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw ValidationError("unterminated quote in CSV line");
    out.push_back(std::move(field));
    return out;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

std::string format_sd(double sd) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", sd);
    return buf;
}

}  // namespace

std::string to_csv_line(const ResponseRecord& r, const std::array<double, kNumSdLevels - 1>& ladder) {
    std::string line;
    line += csv_escape(r.observer_id) + ',';
    line += csv_escape(r.stimulus_id) + ',';
    line += std::string(to_string(r.block)) + ',';
    line += format_sd(r.condition.sd(ladder)) + ',';
    line += (r.condition.band_index ? std::to_string(*r.condition.band_index) : std::string("-1")) + ',';
    line += std::string(r.true_category.label()) + ',';
    line += (r.response ? std::string(r.response->label()) : std::string()) + ',';
    line += r.correct ? "1," : "0,";
    line += r.timestamp;
    return line;
}

ResponseRecord parse_csv_line(const std::string& line, const std::array<double, kNumSdLevels - 1>& ladder) {
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw ValidationError("response row needs 9 columns: " + line);
    ResponseRecord r;
    r.observer_id = f[0];
    r.stimulus_id = f[1];
    r.block = parse_block(f[2]);
    double sd = 0.0;
    long band = -1;
    try {
        sd = std::stod(f[3]);
        band = std::stol(f[4]);
    } catch (const std::exception&) {
        throw ValidationError("bad sd/band_index in response row: " + line);
    }
    r.condition.sd_level = sd_level_of(sd, ladder);
    if (band >= 0) r.condition.band_index = static_cast<std::size_t>(band);
    try {
        r.condition.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(e.what()) + " in response row: " + line);
    }
    r.true_category = parse_category(f[5]);
    if (!f[6].empty()) r.response = parse_category(f[6]);
    if (f[7] != "0" && f[7] != "1") throw ValidationError("correct must be 0 or 1: " + line);
    r.correct = f[7] == "1";
    if (r.correct != (r.response && *r.response == r.true_category))
        throw ValidationError("correct flag disagrees with categories: " + line);
    r.timestamp = f[8];
    return r;
}

std::vector<ResponseRecord> read_responses(const fs::path& path, const std::array<double, kNumSdLevels - 1>& ladder) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open responses", path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::vector<ResponseRecord> out;
    std::size_t start = 0, line_no = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) break;  // partial trailing line
        std::string line = text.substr(start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line_no == 1) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line != kResponseCsvHeader) throw ValidationError("unexpected responses header in " + path.string());
            continue;
        }
        if (line.empty()) continue;
        try {
            out.push_back(parse_csv_line(line, ladder));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    ::gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

// ---------------------------------------------------------------------------

ResponseLog::ResponseLog(const fs::path& path, const std::array<double, kNumSdLevels - 1>& ladder, bool sync)
    : path_(path), ladder_(ladder), sync_(sync) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);

    const bool existed = fs::exists(path, ec) && fs::file_size(path, ec) > 0;
    if (existed) {
        existing_ = read_responses(path, ladder);
        // Trim a partial last line left by a crash.
        std::ifstream in(path, std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto last_nl = text.rfind('\n');
        const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
        if (keep != text.size()) fs::resize_file(path, keep, ec);
        if (ec) throw IoError("cannot trim partial response line", path.string());
        if (keep == 0) {
            std::ofstream(path, std::ios::trunc) << kResponseCsvHeader << '\n';
        }
    }
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError(std::string("cannot open response log (") + std::strerror(errno) + ")", path.string());
    if (!existed) {
        const std::string header = std::string(kResponseCsvHeader) + "\n";
        if (::write(fd_, header.data(), header.size()) != static_cast<ssize_t>(header.size()))
            throw IoError("cannot write response header", path.string());
    }
}

ResponseLog::~ResponseLog() {
    if (fd_ >= 0) ::close(fd_);
}

void ResponseLog::append(const ResponseRecord& r) {
    const std::string line = to_csv_line(r, ladder_) + "\n";
    const ssize_t n = ::write(fd_, line.data(), line.size());
    if (n != static_cast<ssize_t>(line.size())) throw IoError("short write to response log", path_.string());
    if (sync_) ::fdatasync(fd_);
}

}  // namespace cbm
