#include "cbm/protocol.hpp"

#include <openssl/evp.h>

#include "cbm/error.hpp"

namespace cbm::protocol {

using nlohmann::json;

namespace {

struct Encoder {
    json operator()(const Hello& m) const {
        return {{"type", "hello"}, {"observer_id", m.observer_id}, {"kind", m.kind}, {"tags", m.tags}};
    }
    json operator()(const Stimulus& m) const {
        json j = {{"type", "stimulus"}, {"stimulus_id", m.stimulus_id}, {"labels", m.labels}};
        if (m.path) j["path"] = *m.path;
        if (m.png_base64) j["png_base64"] = *m.png_base64;
        return j;
    }
    json operator()(const Response& m) const {
        return {{"type", "response"}, {"stimulus_id", m.stimulus_id}, {"category", m.category}};
    }
    json operator()(const Bye&) const { return {{"type", "bye"}}; }
    json operator()(const ErrorMessage& m) const {
        json j = {{"type", "error"}, {"reason", m.reason}};
        if (m.stimulus_id) j["stimulus_id"] = *m.stimulus_id;
        return j;
    }
};

std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ProtocolError(std::string("message lacks string field '") + key + "'");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ProtocolError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

std::string encode(const Message& m) { return std::visit(Encoder{}, m).dump(); }

Message decode(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object()) throw ProtocolError("message must be a JSON object");
    const std::string type = required_string(j, "type");
    if (type == "hello") {
        Hello h{required_string(j, "observer_id"), required_string(j, "kind"), json::object()};
        if (h.kind != "human" && h.kind != "network") throw ProtocolError("hello.kind must be human or network");
        if (auto it = j.find("tags"); it != j.end()) {
            if (!it->is_object()) throw ProtocolError("hello.tags must be an object");
            h.tags = *it;
        }
        return h;
    }
    if (type == "stimulus") {
        Stimulus s{required_string(j, "stimulus_id"), optional_string(j, "path"), optional_string(j, "png_base64"), {}};
        if (!s.path && !s.png_base64) throw ProtocolError("stimulus needs path or png_base64");
        auto it = j.find("labels");
        if (it == j.end() || !it->is_array()) throw ProtocolError("stimulus.labels must be an array");
        for (const auto& l : *it) {
            if (!l.is_string()) throw ProtocolError("stimulus.labels must hold strings");
            s.labels.push_back(l.get<std::string>());
        }
        return s;
    }
    if (type == "response") return Response{required_string(j, "stimulus_id"), required_string(j, "category")};
    if (type == "bye") return Bye{};
    if (type == "error") return ErrorMessage{optional_string(j, "stimulus_id"), required_string(j, "reason")};
    throw ProtocolError("unknown message type '" + type + "'");
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
    std::vector<unsigned char> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ProtocolError("invalid base64 payload");
    // EVP_DecodeBlock keeps the bytes produced by '=' padding.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace cbm::protocol
