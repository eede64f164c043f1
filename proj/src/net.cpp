#include "radfleet/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "radfleet/api.hpp"

namespace radfleet::net {

namespace {

bool send_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

Expected<sockaddr_in, std::string> resolve(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
        return fail("cannot resolve " + host + ": " + ::gai_strerror(rc));
    sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(port);
    return addr;
}

Expected<int, std::string> bind_socket(const std::string& host, std::uint16_t port, int type) {
    auto addr = resolve(host, port);
    if (!addr) return fail(addr.error());
    const int fd = ::socket(AF_INET, type | SOCK_CLOEXEC, 0);
    if (fd < 0) return fail(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&*addr), sizeof *addr) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        return fail("bind " + host + ":" + std::to_string(port) + ": " + err);
    }
    if (type == SOCK_STREAM && ::listen(fd, 64) != 0) {
        ::close(fd);
        return fail(std::string("listen: ") + std::strerror(errno));
    }
    return fd;
}

std::uint16_t local_port(int fd) {
    sockaddr_in a{};
    socklen_t len = sizeof a;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
    return ntohs(a.sin_port);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

// ---- server -----------------------------------------------------------------------

struct NetServer::Impl {
    struct Conn {
        int fd = -1;
        wire::StreamDecoder decoder;
        std::optional<std::uint64_t> imei;
        std::uint64_t token = 0;
        std::mutex write_mu;

        void write(std::span<const std::uint8_t> bytes) {
            std::lock_guard lock(write_mu);
            if (fd >= 0) send_all(fd, bytes.data(), bytes.size());
        }
    };

    server::IngestServer& srv;
    int tcp_fd = -1;
    int udp_fd = -1;
    int wake[2] = {-1, -1};
    Ports ports;
    std::atomic<bool> running{true};
    std::thread device_thread;
    std::thread http_thread;
    httplib::Server http;
    std::map<int, std::shared_ptr<Conn>> conns;

    explicit Impl(server::IngestServer& s) : srv(s) {}

    void close_conn(int fd) {
        const auto it = conns.find(fd);
        if (it == conns.end()) return;
        auto& c = *it->second;
        if (c.imei) srv.detach_session(*c.imei, c.token);
        {
            std::lock_guard lock(c.write_mu);
            ::close(c.fd);
            c.fd = -1;
        }
        conns.erase(it);
    }

    void reply_ack(Conn& c, std::uint16_t n) {
        const auto a = wire::encode_ack({n});
        c.write(a);
    }

    // Returns false when the connection must be closed.
    bool on_message(const std::shared_ptr<Conn>& conn, const wire::Message& msg) {
        Conn& c = *conn;
        if (const auto* f = std::get_if<wire::Frame>(&msg)) {
            if (f->is_login()) {
                if (!srv.authenticate(f->imei)) {
                    reply_ack(c, 0);
                    return false;
                }
                if (c.imei) srv.detach_session(*c.imei, c.token);
                c.imei = f->imei;
                std::weak_ptr<Conn> weak = conn;
                c.token = srv.attach_session(f->imei, [weak](const wire::CommandFrame& cmd) {
                    if (const auto p = weak.lock()) p->write(wire::encode_command(cmd));
                });
                reply_ack(c, 1);
                return true;
            }
            if (!c.imei || *c.imei != f->imei) {
                reply_ack(c, 0);
                return false;
            }
            const auto ack = srv.ingest(f->imei, f->records, store::Transport::Tcp);
            if (ack) {
                reply_ack(c, ack->accepted_count);
                return true;
            }
            if (ack.error() == server::IngestError::Unauthorized) {
                reply_ack(c, 0);
                return false;
            }
            return true;  // storage failure: no ack, the device retransmits
        }
        if (const auto* r = std::get_if<wire::CommandReplyFrame>(&msg)) {
            if (c.imei) srv.on_command_reply(*c.imei, *r);
        }
        return true;
    }

    void on_datagram() {
        std::uint8_t buf[65536];
        sockaddr_in from{};
        socklen_t len = sizeof from;
        const ssize_t n = ::recvfrom(udp_fd, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
        if (n <= 0) return;
        const auto dec = wire::decode_frame(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        if (!dec) return;
        const auto& f = dec->frame;
        std::uint16_t count = 0;
        if (srv.authenticate(f.imei)) {
            if (f.is_login()) {
                count = 1;
            } else {
                const auto ack = srv.ingest(f.imei, f.records, store::Transport::Udp);
                if (!ack) {
                    if (ack.error() == server::IngestError::StorageFailure) return;
                } else {
                    count = ack->accepted_count;
                }
            }
        }
        const auto a = wire::encode_ack({count});
        ::sendto(udp_fd, a.data(), a.size(), 0, reinterpret_cast<sockaddr*>(&from), len);
    }

    void device_loop() {
        while (running) {
            std::vector<pollfd> pfds{{wake[0], POLLIN, 0}, {tcp_fd, POLLIN, 0}, {udp_fd, POLLIN, 0}};
            for (const auto& [fd, c] : conns) pfds.push_back({fd, POLLIN, 0});
            if (::poll(pfds.data(), pfds.size(), 1000) < 0) {
                if (errno == EINTR) continue;
                break;
            }
            if (pfds[0].revents) break;
            if (pfds[1].revents & POLLIN) {
                const int fd = ::accept4(tcp_fd, nullptr, nullptr, SOCK_CLOEXEC);
                if (fd >= 0) {
                    const int one = 1;
                    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                    auto c = std::make_shared<Conn>();
                    c->fd = fd;
                    conns.emplace(fd, std::move(c));
                }
            }
            if (pfds[2].revents & POLLIN) on_datagram();
            for (std::size_t i = 3; i < pfds.size(); ++i) {
                if (!pfds[i].revents) continue;
                const int fd = pfds[i].fd;
                const auto conn = conns.at(fd);
                std::uint8_t buf[8192];
                const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
                if (n <= 0) {
                    close_conn(fd);
                    continue;
                }
                conn->decoder.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
                bool keep = true;
                while (keep) {
                    const auto msg = conn->decoder.next();
                    if (!msg) break;
                    keep = on_message(conn, *msg);
                }
                if (!keep) close_conn(fd);
            }
        }
        while (!conns.empty()) close_conn(conns.begin()->first);
    }

    void setup_http() {
        // each open event stream pins a worker
        http.new_task_queue = [] { return new httplib::ThreadPool(32); };
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        http.Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
            server::StreamFilter filter;
            if (req.has_param("vehicle"))
                for (const auto& v : split_csv(req.get_param_value("vehicle"))) filter.vehicles.insert(std::stoull(v));
            if (req.has_param("types")) {
                const auto types = split_csv(req.get_param_value("types"));
                auto has = [&](const char* t) { return std::find(types.begin(), types.end(), t) != types.end(); };
                filter.positions = has("position");
                filter.alerts = has("alert");
                filter.commands = has("command");
            }
            auto sub = srv.subscribe(filter);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream",
                [this, sub](std::size_t, httplib::DataSink& sink) {
                    if (!running) {
                        sink.done();
                        return true;
                    }
                    const auto e = sub->pop(std::chrono::milliseconds(500));
                    if (!e) {
                        static const std::string keepalive = ": keepalive\n\n";
                        return sink.write(keepalive.data(), keepalive.size());
                    }
                    const std::string text =
                        "id: " + std::to_string(e->id) + "\nevent: " + e->type + "\ndata: " + e->data + "\n\n";
                    if (!sink.write(text.data(), text.size())) return false;
                    if (e->type == "disconnect") sink.done();
                    return true;
                },
                [sub](bool) { sub->close("client"); });
        });
        auto generic = [this](const httplib::Request& req, httplib::Response& res) {
            api::Request r;
            r.method = req.method;
            r.path = req.path;
            for (const auto& [k, v] : req.params) r.query[k] = v;
            r.body = req.body;
            const auto out = api::handle(srv, r);
            res.status = out.status;
            res.set_content(out.body, out.content_type);
        };
        http.Get(R"(/api/.*)", generic);
        http.Post(R"(/api/.*)", generic);
        http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }
};

NetServer::NetServer(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

NetServer::~NetServer() { stop(); }

Expected<std::unique_ptr<NetServer>, std::string> NetServer::start(server::IngestServer& srv,
                                                                   const std::string& bind_address, Ports requested) {
    auto impl = std::make_unique<Impl>(srv);
    auto tcp = bind_socket(bind_address, requested.tcp, SOCK_STREAM);
    if (!tcp) return fail(tcp.error());
    impl->tcp_fd = *tcp;
    auto udp = bind_socket(bind_address, requested.udp, SOCK_DGRAM);
    if (!udp) {
        ::close(impl->tcp_fd);
        return fail(udp.error());
    }
    impl->udp_fd = *udp;
    impl->ports.tcp = local_port(impl->tcp_fd);
    impl->ports.udp = local_port(impl->udp_fd);

    impl->setup_http();
    if (requested.http == 0) {
        const int p = impl->http.bind_to_any_port(bind_address);
        if (p <= 0) return fail(std::string("http bind failed"));
        impl->ports.http = static_cast<std::uint16_t>(p);
    } else {
        if (!impl->http.bind_to_port(bind_address, requested.http))
            return fail("http bind " + bind_address + ":" + std::to_string(requested.http) + " failed");
        impl->ports.http = requested.http;
    }
    if (::pipe2(impl->wake, O_CLOEXEC) != 0) return fail(std::string("pipe failed"));

    Impl* raw = impl.get();
    impl->device_thread = std::thread([raw] { raw->device_loop(); });
    impl->http_thread = std::thread([raw] { raw->http.listen_after_bind(); });
    impl->http.wait_until_ready();  // stop() is a no-op until the listener runs
    return std::unique_ptr<NetServer>(new NetServer(std::move(impl)));
}

Ports NetServer::ports() const { return impl_->ports; }

void NetServer::stop() {
    if (!impl_ || !impl_->running.exchange(false)) return;
    [[maybe_unused]] const auto w = ::write(impl_->wake[1], "x", 1);
    impl_->http.stop();
    if (impl_->device_thread.joinable()) impl_->device_thread.join();
    if (impl_->http_thread.joinable()) impl_->http_thread.join();
    for (int fd : {impl_->tcp_fd, impl_->udp_fd, impl_->wake[0], impl_->wake[1]})
        if (fd >= 0) ::close(fd);
}

// ---- clients ----------------------------------------------------------------------

Expected<TcpClient, std::string> TcpClient::connect(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout) {
    auto addr = resolve(host, port);
    if (!addr) return fail(addr.error());
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) return fail(std::string("socket: ") + std::strerror(errno));
    timeval tv{static_cast<time_t>(timeout.count() / 1000), static_cast<suseconds_t>(timeout.count() % 1000 * 1000)};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&*addr), sizeof *addr) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        return fail("connect " + host + ":" + std::to_string(port) + ": " + err);
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpClient(fd);
}

TcpClient::TcpClient(TcpClient&& o) noexcept : fd_(std::exchange(o.fd_, -1)), decoder_(std::move(o.decoder_)) {}

TcpClient& TcpClient::operator=(TcpClient&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = std::exchange(o.fd_, -1);
        decoder_ = std::move(o.decoder_);
    }
    return *this;
}

TcpClient::~TcpClient() { close(); }

void TcpClient::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

bool TcpClient::send(std::span<const std::uint8_t> bytes) {
    if (fd_ < 0) return false;
    if (!send_all(fd_, bytes.data(), bytes.size())) {
        close();
        return false;
    }
    return true;
}

std::optional<wire::Message> TcpClient::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        if (auto m = decoder_.next()) return m;
        if (fd_ < 0) return std::nullopt;
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) return std::nullopt;
        std::uint8_t buf[4096];
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n <= 0) {
            close();
            continue;  // drain what is already decoded
        }
        decoder_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
    }
}

Expected<std::optional<wire::Ack>, std::string> udp_exchange(const std::string& host, std::uint16_t port,
                                                             std::span<const std::uint8_t> datagram,
                                                             std::chrono::milliseconds timeout) {
    auto addr = resolve(host, port);
    if (!addr) return fail(addr.error());
    const int fd = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd < 0) return fail(std::string("socket: ") + std::strerror(errno));
    if (::sendto(fd, datagram.data(), datagram.size(), 0, reinterpret_cast<sockaddr*>(&*addr), sizeof *addr) < 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        return fail("sendto: " + err);
    }
    pollfd p{fd, POLLIN, 0};
    std::optional<wire::Ack> ack;
    if (::poll(&p, 1, static_cast<int>(timeout.count())) > 0) {
        std::uint8_t buf[64];
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n > 0) {
            const auto m = wire::decode_message(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
            if (m)
                if (const auto* a = std::get_if<wire::Ack>(&m->message)) ack = *a;
        }
    }
    ::close(fd);
    return ack;
}

Expected<HttpReply, std::string> http_request(const std::string& host, std::uint16_t port, const std::string& method,
                                              const std::string& path, const std::string& body) {
    httplib::Client cli(host, port);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(30);
    httplib::Result res = method == "POST" ? cli.Post(path, body, "application/json") : cli.Get(path);
    if (!res) return fail("http " + host + ":" + std::to_string(port) + ": " + httplib::to_string(res.error()));
    return HttpReply{res->status, res->body};
}

Expected<std::vector<std::string>, std::string> read_event_stream(const std::string& host, std::uint16_t port,
                                                                  const std::string& query, std::size_t max_events,
                                                                  std::chrono::milliseconds timeout) {
    httplib::Client cli(host, port);
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count() + 1);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::vector<std::string> events;
    std::string pending;
    const auto res = cli.Get("/api/stream" + (query.empty() ? std::string() : "?" + query),
                             [&](const char* data, std::size_t n) {
                                 pending.append(data, n);
                                 std::size_t pos;
                                 while ((pos = pending.find('\n')) != std::string::npos) {
                                     const auto line = pending.substr(0, pos);
                                     pending.erase(0, pos + 1);
                                     if (line.rfind("data: ", 0) == 0) events.push_back(line.substr(6));
                                 }
                                 return events.size() < max_events && std::chrono::steady_clock::now() < deadline;
                             });
    if (!res && res.error() != httplib::Error::Canceled)
        return fail("stream: " + httplib::to_string(res.error()));
    return events;
}

}  // namespace radfleet::net
