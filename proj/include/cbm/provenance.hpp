#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbm {

std::string_view tool_version();

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// {tool, version, command, config, inputs: [{path, sha256}]}
nlohmann::json make_provenance(const std::string& command, const nlohmann::json& config,
                               const std::vector<std::filesystem::path>& inputs);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cbm
