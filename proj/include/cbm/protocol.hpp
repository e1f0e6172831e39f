#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace cbm::protocol {

// Newline-delimited JSON, one object per line, keyed by "type".

struct Hello {
    std::string observer_id;
    std::string kind;  // "human" | "network"
    nlohmann::json tags = nlohmann::json::object();
    friend bool operator==(const Hello&, const Hello&) = default;
};

struct Stimulus {
    std::string stimulus_id;
    std::optional<std::string> path;        // shared-path transfer
    std::optional<std::string> png_base64;  // inline transfer
    std::vector<std::string> labels;
    friend bool operator==(const Stimulus&, const Stimulus&) = default;
};

struct Response {
    std::string stimulus_id;
    std::string category;
    friend bool operator==(const Response&, const Response&) = default;
};

struct Bye {
    friend bool operator==(const Bye&, const Bye&) = default;
};

/// Observer-side failure: a rejected hello (no stimulus id) or a failed trial.
struct ErrorMessage {
    std::optional<std::string> stimulus_id;
    std::string reason;
    friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

using Message = std::variant<Hello, Stimulus, Response, Bye, ErrorMessage>;

/// Single line, no trailing newline, keys sorted.
std::string encode(const Message& m);

/// Throws ProtocolError on malformed JSON, unknown type or missing fields.
Message decode(const std::string& line);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace cbm::protocol
