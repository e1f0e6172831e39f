#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cbm {

/// A line-oriented, bidirectional link to one observer.
class ObserverEndpoint {
public:
    virtual ~ObserverEndpoint() = default;

    virtual void send_line(const std::string& line) = 0;

    /// Next complete line, or nullopt when `timeout` elapses first. A
    /// non-positive timeout waits forever. Throws ProtocolError on EOF.
    virtual std::optional<std::string> receive_line(std::chrono::milliseconds timeout) = 0;

    virtual void close() {}
};

/// Buffered newline splitter over a readable file descriptor.
class FdLineReader {
public:
    explicit FdLineReader(int fd) : fd_(fd) {}
    std::optional<std::string> read_line(std::chrono::milliseconds timeout);

private:
    int fd_;
    std::string buffer_;
    bool eof_ = false;
};

/// Spawns `argv` and talks over its stdin/stdout. stderr is inherited.
class SubprocessEndpoint : public ObserverEndpoint {
public:
    explicit SubprocessEndpoint(const std::vector<std::string>& argv);
    ~SubprocessEndpoint() override;

    SubprocessEndpoint(const SubprocessEndpoint&) = delete;
    SubprocessEndpoint& operator=(const SubprocessEndpoint&) = delete;

    void send_line(const std::string& line) override;
    std::optional<std::string> receive_line(std::chrono::milliseconds timeout) override;
    void close() override;

    /// Exit status after close(), -1 if unknown.
    int exit_status() const { return exit_status_; }

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int exit_status_ = -1;
    std::unique_ptr<FdLineReader> reader_;
};

/// Connects to an observer listening on host:port.
class TcpEndpoint : public ObserverEndpoint {
public:
    TcpEndpoint(const std::string& host, unsigned short port);
    ~TcpEndpoint() override;

    TcpEndpoint(const TcpEndpoint&) = delete;
    TcpEndpoint& operator=(const TcpEndpoint&) = delete;

    void send_line(const std::string& line) override;
    std::optional<std::string> receive_line(std::chrono::milliseconds timeout) override;
    void close() override;

private:
    int fd_ = -1;
    std::unique_ptr<FdLineReader> reader_;
};

/// Runs an observer in the same process. The handler receives each line the
/// session sends and returns the lines the observer writes back. `greeting`
/// is queued before anything is sent (the observer's hello).
class InProcessEndpoint : public ObserverEndpoint {
public:
    using Handler = std::function<std::vector<std::string>(const std::string&)>;

    InProcessEndpoint(std::vector<std::string> greeting, Handler handler);

    void send_line(const std::string& line) override;
    std::optional<std::string> receive_line(std::chrono::milliseconds timeout) override;
    void close() override { closed_ = true; }

private:
    std::deque<std::string> pending_;
    Handler handler_;
    bool closed_ = false;
};

/// Parses "host:port".
std::pair<std::string, unsigned short> parse_host_port(const std::string& s);

}  // namespace cbm
