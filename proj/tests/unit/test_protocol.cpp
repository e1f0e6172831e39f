#include <gtest/gtest.h>

#include <random>

#include "cbm/error.hpp"
#include "cbm/protocol.hpp"

using namespace cbm;
using namespace cbm::protocol;

namespace {

std::string random_text(std::mt19937_64& rng) {
    // Includes quotes, backslashes, control characters and UTF-8.
    static const std::vector<std::string> pieces = {"a", "Z", "_", "\"", "\\", "\n", "\t", " ", "é", "猫", "{", "}", ",", "7"};
    std::uniform_int_distribution<std::size_t> len(0, 12), pick(0, pieces.size() - 1);
    std::string s;
    for (std::size_t i = len(rng); i > 0; --i) s += pieces[pick(rng)];
    return s;
}

Message random_message(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> type(0, 4), coin(0, 1);
    switch (type(rng)) {
        case 0: {
            Hello h{random_text(rng), coin(rng) ? "human" : "network", nlohmann::json::object()};
            if (coin(rng)) h.tags["adversarial_training_eps"] = random_text(rng);
            return h;
        }
        case 1: {
            Stimulus s{random_text(rng), std::nullopt, std::nullopt, {}};
            if (coin(rng)) s.path = random_text(rng);
            else s.png_base64 = base64_encode({1, 2, 3, static_cast<unsigned char>(rng())});
            for (int i = 0; i < 16; ++i) s.labels.push_back(random_text(rng));
            return s;
        }
        case 2: return Response{random_text(rng), random_text(rng)};
        case 3: return Bye{};
        default: {
            ErrorMessage e{std::nullopt, random_text(rng)};
            if (coin(rng)) e.stimulus_id = random_text(rng);
            return e;
        }
    }
}

}  // namespace

TEST(Protocol, RoundTripEveryMessageType) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        const Message m = random_message(rng);
        const std::string line = encode(m);
        ASSERT_EQ(line.find('\n'), std::string::npos);
        const Message back = decode(line);
        EXPECT_EQ(back, m) << line;
        EXPECT_EQ(encode(back), line);
    }
}

TEST(Protocol, WireShapes) {
    EXPECT_EQ(encode(Response{"s1", "dog"}), R"({"category":"dog","stimulus_id":"s1","type":"response"})");
    EXPECT_EQ(encode(Bye{}), R"({"type":"bye"})");
    const Message h = decode(R"({"type":"hello","observer_id":"resnet50","kind":"network"})");
    ASSERT_TRUE(std::holds_alternative<Hello>(h));
    EXPECT_TRUE(std::get<Hello>(h).tags.empty());
    const Message s = decode(R"({"type":"stimulus","stimulus_id":"x","path":"/p.png","labels":[]})");
    EXPECT_EQ(std::get<Stimulus>(s).path, "/p.png");
}

TEST(Protocol, MalformedLinesAreProtocolErrors) {
    for (const char* bad : {"", "not json", "[]", R"({"type":"wave"})", R"({"observer_id":"x"})",
                            R"({"type":"response","stimulus_id":"s"})", R"({"type":"response","stimulus_id":3,"category":"dog"})",
                            R"({"type":"hello","observer_id":"x","kind":"robot"})",
                            R"({"type":"stimulus","stimulus_id":"x","labels":[]})"})
        EXPECT_THROW(decode(bad), ProtocolError) << bad;
}

TEST(Base64, KnownVectorsAndRoundTrip) {
    auto bytes = [](std::string_view s) { return std::vector<unsigned char>(s.begin(), s.end()); };
    EXPECT_EQ(base64_encode(bytes("")), "");
    EXPECT_EQ(base64_encode(bytes("f")), "Zg==");
    EXPECT_EQ(base64_encode(bytes("fo")), "Zm8=");
    EXPECT_EQ(base64_encode(bytes("foobar")), "Zm9vYmFy");
    std::mt19937_64 rng(2);
    for (int n = 0; n < 300; ++n) {
        std::vector<unsigned char> v(static_cast<std::size_t>(n));
        for (auto& b : v) b = static_cast<unsigned char>(rng());
        EXPECT_EQ(base64_decode(base64_encode(v)), v);
    }
    EXPECT_THROW(base64_decode("@@@"), ProtocolError);
}
