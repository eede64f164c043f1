#pragma once

// Socket front ends: tracker protocol over TCP and UDP, HTTP API with the
// server-sent event stream, and small blocking clients for tools and tests.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/server.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::net {

struct Ports {
    std::uint16_t tcp = 0;
    std::uint16_t udp = 0;
    std::uint16_t http = 0;
};

class NetServer {
public:
    /// Port 0 picks an ephemeral port; see ports() for what was bound.
    static Expected<std::unique_ptr<NetServer>, std::string> start(server::IngestServer& srv,
                                                                   const std::string& bind_address, Ports requested);
    ~NetServer();
    NetServer(const NetServer&) = delete;
    NetServer& operator=(const NetServer&) = delete;

    Ports ports() const;
    void stop();

    struct Impl;

private:
    explicit NetServer(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

/// Blocking TCP client speaking the tracker protocol.
class TcpClient {
public:
    static Expected<TcpClient, std::string> connect(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout = std::chrono::seconds(5));
    TcpClient(TcpClient&& o) noexcept;
    TcpClient& operator=(TcpClient&& o) noexcept;
    ~TcpClient();

    bool send(std::span<const std::uint8_t> bytes);
    /// Next decoded message, or nullopt on timeout or closed connection.
    std::optional<wire::Message> receive(std::chrono::milliseconds timeout);
    bool is_open() const { return fd_ >= 0; }
    void close();

private:
    explicit TcpClient(int fd) : fd_(fd) {}
    int fd_ = -1;
    wire::StreamDecoder decoder_;
};

/// One datagram out, at most one ack back.
Expected<std::optional<wire::Ack>, std::string> udp_exchange(const std::string& host, std::uint16_t port,
                                                             std::span<const std::uint8_t> datagram,
                                                             std::chrono::milliseconds timeout);

struct HttpReply {
    int status = 0;
    std::string body;
};

Expected<HttpReply, std::string> http_request(const std::string& host, std::uint16_t port, const std::string& method,
                                              const std::string& path, const std::string& body = {});

/// Collects up to `max_events` SSE "data:" payloads from /api/stream.
Expected<std::vector<std::string>, std::string> read_event_stream(const std::string& host, std::uint16_t port,
                                                                  const std::string& query, std::size_t max_events,
                                                                  std::chrono::milliseconds timeout);

}  // namespace radfleet::net
