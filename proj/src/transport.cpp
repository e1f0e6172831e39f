#include "cbm/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cbm/error.hpp"

namespace cbm {

namespace {

void write_all(int fd, const std::string& data) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("observer link write failed: ") + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

void ignore_sigpipe() {
    static const bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

}  // namespace

std::optional<std::string> FdLineReader::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (eof_) throw ProtocolError("observer disconnected");

        int wait_ms = -1;
        if (timeout.count() > 0) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            wait_ms = static_cast<int>(left.count());
        }
        pollfd pfd{fd_, POLLIN, 0};
        int r = ::poll(&pfd, 1, wait_ms);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (r == 0) return std::nullopt;
        char chunk[65536];
        ssize_t n = ::read(fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ProtocolError(std::string("observer link read failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            eof_ = true;
            continue;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

// ---------------------------------------------------------------------------

SubprocessEndpoint::SubprocessEndpoint(const std::vector<std::string>& argv) {
    if (argv.empty()) throw ValidationError("empty observer command");
    ignore_sigpipe();
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw IoError("pipe() failed");

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) throw IoError("fork() failed");
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
    reader_ = std::make_unique<FdLineReader>(from_child_);
}

SubprocessEndpoint::~SubprocessEndpoint() {
    try {
        close();
    } catch (...) {
    }
}

void SubprocessEndpoint::send_line(const std::string& line) {
    if (to_child_ < 0) throw ProtocolError("observer link is closed");
    write_all(to_child_, line + "\n");
}

std::optional<std::string> SubprocessEndpoint::receive_line(std::chrono::milliseconds timeout) {
    if (!reader_) throw ProtocolError("observer link is closed");
    return reader_->read_line(timeout);
}

void SubprocessEndpoint::close() {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (pid_ > 0) {
        // Closing stdin asks the child to finish; give it a moment, then kill.
        int status = 0;
        pid_t r = 0;
        for (int i = 0; i < 200 && (r = ::waitpid(pid_, &status, WNOHANG)) == 0; ++i) ::usleep(10'000);
        if (r == 0) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
        exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        pid_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    reader_.reset();
}

// ---------------------------------------------------------------------------

TcpEndpoint::TcpEndpoint(const std::string& host, unsigned short port) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_s = std::to_string(port);
    if (::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res) != 0)
        throw IoError("cannot resolve observer host", host);
    for (addrinfo* a = res; a; a = a->ai_next) {
        int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw IoError("cannot connect to observer", host + ":" + port_s);
    reader_ = std::make_unique<FdLineReader>(fd_);
}

TcpEndpoint::~TcpEndpoint() { close(); }

void TcpEndpoint::send_line(const std::string& line) {
    if (fd_ < 0) throw ProtocolError("observer link is closed");
    write_all(fd_, line + "\n");
}

std::optional<std::string> TcpEndpoint::receive_line(std::chrono::milliseconds timeout) {
    if (!reader_) throw ProtocolError("observer link is closed");
    return reader_->read_line(timeout);
}

void TcpEndpoint::close() {
    reader_.reset();
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

// ---------------------------------------------------------------------------

InProcessEndpoint::InProcessEndpoint(std::vector<std::string> greeting, Handler handler)
    : pending_(greeting.begin(), greeting.end()), handler_(std::move(handler)) {}

void InProcessEndpoint::send_line(const std::string& line) {
    if (closed_) throw ProtocolError("observer link is closed");
    for (auto& out : handler_(line)) pending_.push_back(std::move(out));
}

std::optional<std::string> InProcessEndpoint::receive_line(std::chrono::milliseconds) {
    if (pending_.empty()) {
        if (closed_) throw ProtocolError("observer disconnected");
        return std::nullopt;  // nothing will ever arrive: equivalent to a timeout
    }
    std::string line = std::move(pending_.front());
    pending_.pop_front();
    return line;
}

std::pair<std::string, unsigned short> parse_host_port(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
        throw ValidationError("expected host:port, got '" + s + "'");
    unsigned long port = 0;
    try {
        std::size_t pos = 0;
        port = std::stoul(s.substr(colon + 1), &pos);
        if (pos != s.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("bad port in '" + s + "'");
    }
    if (port > 65535) throw ValidationError("port out of range in '" + s + "'");
    return {s.substr(0, colon), static_cast<unsigned short>(port)};
}

}  // namespace cbm
