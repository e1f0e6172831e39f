// Protocol observer for tests and demos: answers from the manifest with a
// planted channel, an oracle, or a fixed label. Speaks NDJSON on stdio, or on
// one accepted TCP connection with --listen.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "cbm/error.hpp"
#include "cbm/protocol.hpp"
#include "cbm/simulated_observer.hpp"
#include "cbm/transport.hpp"

using namespace cbm;

namespace {

int accept_one(unsigned short port) {
    const int s = ::socket(AF_INET, SOCK_STREAM, 0);
    const int one = 1;
    ::setsockopt(s, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(s, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(s, 1) != 0)
        throw IoError("cannot listen on port " + std::to_string(port));
    socklen_t len = sizeof addr;
    ::getsockname(s, reinterpret_cast<sockaddr*>(&addr), &len);
    // Announce the bound port so a parent can connect when port 0 was asked for.
    std::cout << "port " << ntohs(addr.sin_port) << std::endl;
    const int c = ::accept(s, nullptr, nullptr);
    ::close(s);
    if (c < 0) throw IoError("accept failed");
    return c;
}

void write_line(int fd, const std::string& line) {
    const std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
        const ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
        if (n <= 0) throw IoError("write failed");
        off += static_cast<std::size_t>(n);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic protocol observer"};
    std::string manifest_path, policy = "channel", observer_id = "synthetic", kind = "network", fixed = "dog";
    std::uint64_t seed = 1;
    ChannelObserverModel model;
    std::size_t die_after = 0, hang_after = 0, error_every = 0;
    std::string reject_hello;
    std::vector<std::string> tags;
    unsigned short listen_port = 0;
    bool listen = false;

    app.add_option("--manifest", manifest_path)->required();
    app.add_option("--policy", policy, "channel, oracle or fixed");
    app.add_option("--seed", seed);
    app.add_option("--id", observer_id);
    app.add_option("--kind", kind);
    app.add_option("--fixed-answer", fixed);
    app.add_option("--amplitude", model.amplitude);
    app.add_option("--mu", model.mu);
    app.add_option("--sigma", model.sigma);
    app.add_option("--base", model.base);
    app.add_option("--slope", model.slope);
    app.add_option("--tag", tags, "key=value descriptor tag (repeatable)");
    app.add_option("--die-after", die_after, "exit abruptly after this many responses");
    app.add_option("--hang-after", hang_after, "stop answering after this many responses");
    app.add_option("--error-every", error_every, "report a per-trial error on every Nth stimulus");
    app.add_option("--reject-hello", reject_hello, "send an error instead of hello");
    auto* lopt = app.add_option("--listen", listen_port, "serve one TCP connection on this port (0 = any)");
    CLI11_PARSE(app, argc, argv);
    listen = lopt->count() > 0;

    try {
        const StimulusManifest manifest = StimulusManifest::load(manifest_path);
        SyntheticPolicy p = policy == "oracle"  ? SyntheticPolicy::oracle
                            : policy == "fixed" ? SyntheticPolicy::fixed_answer
                                                : SyntheticPolicy::channel;
        if (policy != "oracle" && policy != "fixed" && policy != "channel")
            throw ValidationError("unknown policy '" + policy + "'");
        SyntheticObserver observer(manifest, p, seed, observer_id, kind);
        observer.set_fixed_answer(parse_category(fixed));
        observer.set_model(model);

        const int out_fd = listen ? accept_one(listen_port) : STDOUT_FILENO;
        const int in_fd = listen ? out_fd : STDIN_FILENO;
        FdLineReader reader(in_fd);

        if (!reject_hello.empty()) {
            write_line(out_fd, protocol::encode(protocol::ErrorMessage{std::nullopt, reject_hello}));
            return 0;
        }
        nlohmann::json tag_json = nlohmann::json::object();
        for (const auto& t : tags) {
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ValidationError("--tag wants key=value, got '" + t + "'");
            tag_json[t.substr(0, eq)] = t.substr(eq + 1);
        }
        write_line(out_fd, protocol::encode(protocol::Hello{observer_id, kind, tag_json}));

        std::size_t answered = 0, seen = 0;
        while (true) {
            std::optional<std::string> line;
            try {
                line = reader.read_line(std::chrono::milliseconds(-1));
            } catch (const ProtocolError&) {
                return 0;  // session side closed
            }
            if (!line) continue;
            const protocol::Message m = protocol::decode(*line);
            if (std::holds_alternative<protocol::Bye>(m)) return 0;
            const auto* stim = std::get_if<protocol::Stimulus>(&m);
            if (!stim) continue;
            ++seen;
            if (hang_after && answered == hang_after) {
                std::this_thread::sleep_for(std::chrono::hours(1));
                return 0;
            }
            if (error_every && seen % error_every == 0) {
                write_line(out_fd, protocol::encode(protocol::ErrorMessage{stim->stimulus_id, "synthetic failure"}));
            } else {
                for (const auto& reply : observer.handle(*line)) write_line(out_fd, reply);
            }
            ++answered;
            if (die_after && answered == die_after) std::_Exit(9);
        }
    } catch (const Error& e) {
        std::cerr << "synthetic_observer: " << e.what() << "\n";
        return static_cast<int>(e.code());
    }
}
