#include "segloop/wire.hpp"

#include <cerrno>
#include <cstring>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "segloop/protocol.hpp"

namespace segloop {

namespace {

// Blocking line-oriented IO over a pair of file descriptors.
class FdChannel : public WireChannel {
public:
    FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

    ~FdChannel() override {
        if (read_fd_ >= 0) ::close(read_fd_);
        if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    }

    void send_line(const std::string& line) override {
        std::string framed = line;
        framed.push_back('\n');
        std::size_t off = 0;
        while (off < framed.size()) {
            const ssize_t n = ::write(write_fd_, framed.data() + off, framed.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("wire write failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::optional<std::string> recv_line() override {
        std::string line;
        while (true) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            char chunk[4096];
            const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("wire read failed: ") + std::strerror(errno));
            }
            if (n == 0) {
                if (buffer_.empty()) return std::nullopt;
                line.swap(buffer_);
                return line;
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void close_write() {
        if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
        write_fd_ = -1;
    }

private:
    int read_fd_;
    int write_fd_;
    std::string buffer_;
};

class SubprocessChannel : public FdChannel {
public:
    SubprocessChannel(int read_fd, int write_fd, pid_t pid)
        : FdChannel(read_fd, write_fd), pid_(pid) {}

    ~SubprocessChannel() override {
        close_write();
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }

private:
    pid_t pid_;
};

} // namespace

std::unique_ptr<WireChannel> open_subprocess_channel(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
        throw ProtocolError("cannot create pipes for external policy");

    const pid_t pid = ::fork();
    if (pid < 0) throw ProtocolError("cannot fork external policy");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<SubprocessChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<WireChannel> open_tcp_channel(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
        throw ProtocolError("cannot resolve policy endpoint " + host);

    int fd = -1;
    for (addrinfo* it = res; it; it = it->ai_next) {
        fd = ::socket(it->ai_family, it->ai_socktype, it->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, it->ai_addr, it->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ProtocolError("cannot connect to policy endpoint " + host);
    return std::make_unique<FdChannel>(fd, fd);
}

std::string ExternalPolicyBridge::request_turn(const Observation& obs) {
    channel_.send_line(
        nlohmann::json{{"type", "obs"}, {"payload", observation_to_json(obs)}}.dump());
    const auto line = channel_.recv_line();
    if (!line) throw ProtocolError("external policy closed the channel mid-episode");
    nlohmann::json frame = nlohmann::json::parse(*line, nullptr, false);
    if (frame.is_discarded() || !frame.is_object() || frame.value("type", "") != "turn" ||
        !frame.contains("raw") || !frame["raw"].is_string())
        return *line; // surfaces as a format violation downstream
    return frame["raw"].get<std::string>();
}

void ExternalPolicyBridge::send_end() {
    channel_.send_line(nlohmann::json{{"type", "end"}}.dump());
}

} // namespace segloop
