#pragma once

#include <memory>
#include <optional>
#include <string>

#include "segloop/observation.hpp"

namespace segloop {

/// Newline-delimited text channel to an external policy.
class WireChannel {
public:
    virtual ~WireChannel() = default;
    virtual void send_line(const std::string& line) = 0;
    virtual std::optional<std::string> recv_line() = 0; // nullopt on EOF
};

/// Spawns `command` via the shell and speaks over its stdio.
std::unique_ptr<WireChannel> open_subprocess_channel(const std::string& command);

/// Connects to a listening policy server.
std::unique_ptr<WireChannel> open_tcp_channel(const std::string& host, int port);

/// Frames: {"type":"obs","payload":{...}} out, {"type":"turn","raw":"..."}
/// back, {"type":"end"} closes the session. Malformed frames are handed
/// back as raw turn text so they surface as format violations; a closed
/// channel raises ProtocolError.
class ExternalPolicyBridge {
public:
    explicit ExternalPolicyBridge(WireChannel& channel) : channel_(channel) {}

    std::string request_turn(const Observation& obs);
    void send_end();

private:
    WireChannel& channel_;
};

} // namespace segloop
