#include <algorithm>
#include <atomic>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "radfleet/net.hpp"
#include "radfleet/server.hpp"
#include "radfleet/sim.hpp"

namespace radfleet::sim {

namespace {

using json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::span<const std::uint8_t> b) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto c : b) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

ScenarioError error(ScenarioErrorKind k, std::string msg) { return {k, std::move(msg)}; }

// ---- device links -----------------------------------------------------------------

class Link {
public:
    virtual ~Link() = default;
    /// Fresh session; called before each login frame.
    virtual Expected<Ok, ScenarioError> open() = 0;
    virtual void close() = 0;
    /// Hands one uplink unit to the server; returns its immediate answers.
    virtual Expected<std::vector<wire::Message>, ScenarioError> deliver(const Bytes& bytes, bool expect_reply) = 0;
    /// Server-initiated messages waiting for the device.
    virtual std::vector<wire::Message> pushed(std::chrono::milliseconds wait) = 0;
};

class InProcessLink final : public Link {
public:
    InProcessLink(server::IngestServer& srv, std::uint64_t imei, tracker::Transport t)
        : srv_(srv), imei_(imei), transport_(t) {}
    ~InProcessLink() override { close(); }

    Expected<Ok, ScenarioError> open() override {
        close();
        return Ok{};
    }

    void close() override {
        if (token_) srv_.detach_session(imei_, *token_);
        token_.reset();
    }

    Expected<std::vector<wire::Message>, ScenarioError> deliver(const Bytes& bytes, bool) override {
        std::vector<wire::Message> out;
        const auto m = wire::decode_message(bytes);
        if (!m) return out;
        if (const auto* f = std::get_if<wire::Frame>(&m->message)) {
            const bool udp = transport_ == tracker::Transport::Udp;
            if (f->is_login()) {
                const bool ok = srv_.authenticate(f->imei);
                if (ok && !udp) {
                    close();
                    token_ = srv_.attach_session(f->imei, [this](const wire::CommandFrame& c) { pending_.push_back(c); });
                }
                out.push_back(wire::Ack{static_cast<std::uint16_t>(ok ? 1 : 0)});
                return out;
            }
            if (udp ? !srv_.authenticate(f->imei) : !token_) {
                out.push_back(wire::Ack{0});
                return out;
            }
            const auto ack = srv_.ingest(f->imei, f->records, udp ? store::Transport::Udp : store::Transport::Tcp);
            if (ack) out.push_back(*ack);
            else if (ack.error() == server::IngestError::StorageFailure)
                return fail(error(ScenarioErrorKind::Storage, "ingest failed to persist"));
            else
                out.push_back(wire::Ack{0});
            return out;
        }
        if (const auto* r = std::get_if<wire::CommandReplyFrame>(&m->message))
            if (token_) srv_.on_command_reply(imei_, *r);
        return out;
    }

    std::vector<wire::Message> pushed(std::chrono::milliseconds) override {
        std::vector<wire::Message> out(pending_.begin(), pending_.end());
        pending_.clear();
        return out;
    }

private:
    server::IngestServer& srv_;
    std::uint64_t imei_;
    tracker::Transport transport_;
    std::optional<std::uint64_t> token_;
    std::vector<wire::CommandFrame> pending_;
};

class SocketLink final : public Link {
public:
    SocketLink(const Backend& b, tracker::Transport t) : backend_(b), transport_(t) {}

    Expected<Ok, ScenarioError> open() override {
        close();
        if (transport_ == tracker::Transport::Udp) return Ok{};
        auto c = net::TcpClient::connect(backend_.host, backend_.tcp_port);
        if (!c) return fail(error(ScenarioErrorKind::ServerUnreachable, c.error()));
        client_.emplace(std::move(*c));
        return Ok{};
    }

    void close() override { client_.reset(); }

    Expected<std::vector<wire::Message>, ScenarioError> deliver(const Bytes& bytes, bool expect_reply) override {
        std::vector<wire::Message> out;
        if (transport_ == tracker::Transport::Udp) {
            const auto a = net::udp_exchange(backend_.host, backend_.udp_port, bytes, std::chrono::seconds(2));
            if (!a) return fail(error(ScenarioErrorKind::ServerUnreachable, a.error()));
            if (*a) out.push_back(**a);
            return out;
        }
        if (!client_ || !client_->is_open()) {
            // Data without a session: the server answers with a reject.
            if (auto o = open(); !o) return fail(o.error());
        }
        if (!client_->send(bytes)) return out;
        if (!expect_reply) return out;
        while (auto m = client_->receive(std::chrono::seconds(5))) {
            const bool ack = std::holds_alternative<wire::Ack>(*m);
            out.push_back(std::move(*m));
            if (ack) break;
        }
        return out;
    }

    std::vector<wire::Message> pushed(std::chrono::milliseconds wait) override {
        std::vector<wire::Message> out;
        if (!client_) return out;
        for (auto m = client_->receive(wait); m; m = client_->receive(std::chrono::milliseconds(0)))
            out.push_back(std::move(*m));
        return out;
    }

private:
    Backend backend_;
    tracker::Transport transport_;
    std::optional<net::TcpClient> client_;
};

// ---- engine -----------------------------------------------------------------------

constexpr TimestampMs kSettleMs = 15 * kMsPerMinute;

struct Vehicle {
    VehicleSpec spec;
    tracker::Tracker trk;
    TraceGenerator gen;
    std::unique_ptr<Link> link;
    bool alive = false;  // GPRS session possible at the last tick
    TimestampMs last_up = 0;
    TimestampMs last_down = 0;
    std::size_t peak_bytes = 0;
    std::map<std::uint32_t, TimestampMs> alert_records;  // seq -> record time
    double odometer_m = 0.0;
};

struct Event {
    enum class Kind { Up, Down, SmsUp, SmsDown, Command };
    TimestampMs time = 0;
    std::uint64_t order = 0;
    Kind kind = Kind::Up;
    std::size_t vehicle = 0;
    Bytes bytes;
    bool login = false;
    bool expect_reply = false;
    std::vector<wire::Message> messages;
    std::string text;
};

struct Later {
    bool operator()(const Event& a, const Event& b) const {
        return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
};

class Engine {
public:
    Engine(const Scenario& sc, const RunOptions& opt) : sc_(sc), opt_(opt) {
        net_rng_.seed(sc.network.seed.value_or(splitmix64(sc.seed ^ 0x6E6574776F726BULL)));
    }

    ~Engine() {
        for (auto& v : vehicles_)
            if (v.link) v.link->close();
        vehicles_.clear();
        net_.reset();
        srv_.reset();
    }

    Expected<ScenarioReport, ScenarioError> run();

private:
    Expected<Ok, ScenarioError> setup();
    Expected<Ok, ScenarioError> tick(Vehicle& v, std::size_t index, TimestampMs now);
    Expected<Ok, ScenarioError> process(Event& e);
    void outbound(std::size_t index, std::vector<tracker::Outbound> out, TimestampMs now);
    void schedule(Event e);
    void schedule_down(std::size_t index, std::vector<wire::Message> msgs, TimestampMs now);
    void drain_sms_outbox(TimestampMs now);
    bool outage(const Vehicle& v, TimestampMs t) const;
    TimestampMs after_outages(const Vehicle& v, TimestampMs t) const;
    TimestampMs latency();
    TimestampMs sms_latency();
    bool udp_dropped(const Vehicle& v);
    void log(TimestampMs t, const Vehicle& v, const char* what, std::span<const std::uint8_t> bytes);
    std::optional<std::size_t> by_phone(std::string_view phone) const;
    ScenarioReport build_report();

    const Scenario& sc_;
    const RunOptions& opt_;
    std::atomic<TimestampMs> clock_{0};
    std::unique_ptr<server::IngestServer> srv_;
    std::unique_ptr<net::NetServer> net_;
    Backend endpoint_;
    std::vector<Vehicle> vehicles_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::uint64_t order_ = 0;
    std::mt19937_64 net_rng_;
    std::uint64_t ticks_ = 0;
    std::vector<std::string> log_;
    std::vector<std::pair<std::uint64_t, std::optional<std::uint32_t>>> tickets_;  // imei, id
};

bool Engine::outage(const Vehicle& v, TimestampMs t) const {
    for (const auto& w : sc_.network.outages)
        if (w.contains(t)) return true;
    for (const auto& w : v.spec.outages)
        if (w.contains(t)) return true;
    return false;
}

TimestampMs Engine::after_outages(const Vehicle& v, TimestampMs t) const {
    // Windows may chain; iterate until t is clear.
    for (bool moved = true; moved;) {
        moved = false;
        for (const auto* list : {&sc_.network.outages, &v.spec.outages})
            for (const auto& w : *list)
                if (w.contains(t)) {
                    t = w.to;
                    moved = true;
                }
    }
    return t;
}

TimestampMs Engine::latency() {
    const auto span = static_cast<std::uint64_t>(sc_.network.latency_max_ms - sc_.network.latency_min_ms + 1);
    return sc_.network.latency_min_ms + static_cast<TimestampMs>(net_rng_() % span);
}

TimestampMs Engine::sms_latency() {
    const auto span = static_cast<std::uint64_t>(sc_.network.sms_latency_max_ms - sc_.network.sms_latency_min_ms + 1);
    return sc_.network.sms_latency_min_ms + static_cast<TimestampMs>(net_rng_() % span);
}

bool Engine::udp_dropped(const Vehicle& v) {
    if (v.spec.transport != tracker::Transport::Udp) return false;
    const double u = static_cast<double>(net_rng_() >> 11) * 0x1.0p-53;
    return u < sc_.network.udp_drop_probability;
}

void Engine::log(TimestampMs t, const Vehicle& v, const char* what, std::span<const std::uint8_t> bytes) {
    if (!opt_.trace_deliveries) return;
    std::ostringstream s;
    s << t << ',' << v.spec.imei << ',' << what << ',' << bytes.size() << ',' << std::hex << fnv1a(bytes) << std::dec;
    if (const auto m = wire::decode_message(bytes)) {
        if (const auto* f = std::get_if<wire::Frame>(&m->message)) {
            s << ",seq";
            for (const auto& r : f->records) s << ' ' << r.seq;
        } else if (const auto* a = std::get_if<wire::Ack>(&m->message)) {
            s << ",n " << a->accepted_count;
        }
    }
    log_.push_back(s.str());
}

std::optional<std::size_t> Engine::by_phone(std::string_view phone) const {
    for (std::size_t i = 0; i < vehicles_.size(); ++i)
        if (vehicles_[i].spec.phone == phone) return i;
    return std::nullopt;
}

void Engine::schedule(Event e) {
    e.order = order_++;
    queue_.push(std::move(e));
}

Expected<Ok, ScenarioError> Engine::setup() {
    clock_ = sc_.start;
    std::vector<geo::GeofenceZone> zones;
    for (const auto& z : sc_.zones) {
        auto zone = tracker::parse_zone_spec(z);
        if (!zone) return fail(error(ScenarioErrorKind::BadConfig, "zone '" + z + "': " + zone.error()));
        zones.push_back(*zone);
    }

    if (sc_.backend.kind != BackendKind::Remote) {
        server::ServerConfig cfg;
        cfg.data_dir = opt_.data_dir;
        cfg.sms_enabled = true;
        cfg.sync_writes = false;
        cfg.utc_offset_min = sc_.utc_offset_min;
        cfg.zones = zones;
        for (const auto& v : sc_.vehicles) {
            store::DeviceInfo d;
            d.imei = v.imei;
            d.label = v.label;
            d.phone = v.phone;
            d.speed_limit_kmh = v.speed_limit_kmh;
            d.tank_capacity_l = v.route.fuel.tank_l;
            d.created_at = sc_.start;
            cfg.registry_seed.push_back(d);
        }
        std::error_code ec;
        if (std::filesystem::exists(opt_.data_dir, ec) && !std::filesystem::is_empty(opt_.data_dir, ec))
            return fail(error(ScenarioErrorKind::BadConfig,
                              "data directory " + opt_.data_dir.string() + " is not empty; runs need a fresh store"));
        auto s = server::IngestServer::open(cfg, [this] { return clock_.load(); });
        if (!s) return fail(error(ScenarioErrorKind::Storage, s.error()));
        srv_ = std::move(*s);
        if (sc_.backend.kind == BackendKind::Loopback) {
            auto n = net::NetServer::start(*srv_, "127.0.0.1", {});
            if (!n) return fail(error(ScenarioErrorKind::ServerUnreachable, n.error()));
            net_ = std::move(*n);
            endpoint_.kind = BackendKind::Loopback;
            endpoint_.tcp_port = net_->ports().tcp;
            endpoint_.udp_port = net_->ports().udp;
            endpoint_.http_port = net_->ports().http;
        }
    } else {
        endpoint_ = sc_.backend;
    }

    vehicles_.reserve(sc_.vehicles.size());
    for (std::size_t i = 0; i < sc_.vehicles.size(); ++i) {
        const auto& spec = sc_.vehicles[i];
        if (auto ok = validate(spec.route); !ok)
            return fail(error(ScenarioErrorKind::BadConfig, "vehicle " + std::to_string(spec.imei) + ": " + ok.error()));
        tracker::TrackerConfig tc;
        tc.imei = spec.imei;
        tc.transport = spec.transport;
        tc.zones = zones;
        tc.sms_gateway = srv_ ? srv_->config().sms_gateway_number : tc.sms_gateway;
        tc.authorized_numbers = {tc.sms_gateway};
        if (spec.speed_limit_kmh) tc.speed_limit_kmh = *spec.speed_limit_kmh;
        for (const auto& [k, val] : sc_.tracker_params)
            if (auto ok = tracker::set_param(tc, k, val); !ok)
                return fail(error(ScenarioErrorKind::BadConfig,
                                  "tracker param " + k + ": " + std::string(tracker::to_string(ok.error()))));
        const std::uint64_t seed = splitmix64(sc_.seed ^ splitmix64(i + 1));
        Vehicle v{spec, tracker::Tracker(tc), TraceGenerator(spec.route, seed, sc_.start, sc_.tick_ms), nullptr, false, 0, 0, 0, {}, 0.0};
        if (srv_ && !net_) v.link = std::make_unique<InProcessLink>(*srv_, spec.imei, spec.transport);
        else v.link = std::make_unique<SocketLink>(endpoint_, spec.transport);
        vehicles_.push_back(std::move(v));
    }
    for (const auto& c : sc_.commands) {
        Event e;
        e.kind = Event::Kind::Command;
        e.time = c.at;
        e.text = c.text;
        const auto it = std::find_if(vehicles_.begin(), vehicles_.end(),
                                     [&](const Vehicle& v) { return v.spec.imei == c.imei; });
        if (it == vehicles_.end())
            return fail(error(ScenarioErrorKind::BadConfig, "command for unknown vehicle " + std::to_string(c.imei)));
        e.vehicle = static_cast<std::size_t>(it - vehicles_.begin());
        schedule(std::move(e));
    }
    return Ok{};
}

void Engine::outbound(std::size_t index, std::vector<tracker::Outbound> out, TimestampMs now) {
    auto& v = vehicles_[index];
    for (auto& o : out) {
        if (auto* d = std::get_if<tracker::DataFrame>(&o)) {
            if (udp_dropped(v)) {
                log(now, v, "up-dropped", d->bytes);
                continue;
            }
            Event e;
            e.kind = Event::Kind::Up;
            e.vehicle = index;
            e.time = std::max(now + latency(), v.last_up);  // TCP keeps order
            v.last_up = e.time;
            e.bytes = std::move(d->bytes);
            e.login = d->login;
            e.expect_reply = true;
            schedule(std::move(e));
        } else {
            auto& sms = std::get<wire::SmsMessage>(o);
            Event e;
            e.kind = Event::Kind::SmsUp;
            e.vehicle = index;
            e.time = now + sms_latency();
            e.text = std::move(sms.text);
            schedule(std::move(e));
        }
    }
}

void Engine::schedule_down(std::size_t index, std::vector<wire::Message> msgs, TimestampMs now) {
    auto& v = vehicles_[index];
    for (auto& m : msgs) {
        if (udp_dropped(v)) continue;
        Event e;
        e.kind = Event::Kind::Down;
        e.vehicle = index;
        e.time = std::max(now + latency(), v.last_down);
        v.last_down = e.time;
        e.messages.push_back(std::move(m));
        schedule(std::move(e));
    }
}

void Engine::drain_sms_outbox(TimestampMs now) {
    if (!srv_) return;
    for (auto& sms : srv_->take_sms_outbox()) {
        const auto idx = by_phone(sms.peer);
        if (!idx) continue;
        Event e;
        e.kind = Event::Kind::SmsDown;
        e.vehicle = *idx;
        e.time = now + sms_latency();
        e.text = std::move(sms.text);
        schedule(std::move(e));
    }
}

Expected<Ok, ScenarioError> Engine::tick(Vehicle& v, std::size_t index, TimestampMs now) {
    const TraceTick tt = v.gen.next();
    v.odometer_m = tt.odometer_m;
    auto& st = v.trk.state();
    const bool gsm = !outage(v, now) && !tt.jammed;
    const bool render = tracker::gps_powered(st.power_mode) || tt.ignition || tt.speed_kmh > 0.0;
    auto frame = to_sensor_frame(tt, render);
    frame.gsm_available = gsm;
    auto out = v.trk.step(frame);
    if (!out) return fail(error(ScenarioErrorKind::Tracker, "tracker clock regression"));
    for (const auto& r : out->records)
        if (r.priority()) v.alert_records[r.seq] = r.time();

    const bool alive = gsm && tracker::modem_powered(st.power_mode);
    if (v.alive && !alive) v.link->close();
    v.alive = alive;
    v.peak_bytes = std::max(v.peak_bytes, st.buffer.size_bytes());
    outbound(index, std::move(out->outbound), now);
    return Ok{};
}

Expected<Ok, ScenarioError> Engine::process(Event& e) {
    clock_ = e.time;
    auto& v = vehicles_[e.vehicle];
    switch (e.kind) {
        case Event::Kind::Up: {
            if (!v.alive || outage(v, e.time)) {
                log(e.time, v, "up-lost", e.bytes);
                return Ok{};
            }
            log(e.time, v, "up", e.bytes);
            if (e.login)
                if (auto o = v.link->open(); !o) return fail(o.error());
            auto replies = v.link->deliver(e.bytes, e.expect_reply);
            if (!replies) return fail(replies.error());
            schedule_down(e.vehicle, std::move(*replies), e.time);
            drain_sms_outbox(e.time);
            return Ok{};
        }
        case Event::Kind::Down: {
            if (!v.alive || outage(v, e.time)) return Ok{};
            for (auto& m : e.messages) {
                if (const auto* a = std::get_if<wire::Ack>(&m)) {
                    log(e.time, v, "ack", wire::encode_ack(*a));
                    outbound(e.vehicle, v.trk.on_ack(*a, e.time), e.time);
                } else if (const auto* c = std::get_if<wire::CommandFrame>(&m)) {
                    const auto reply = v.trk.on_command(*c, e.time);
                    Event r;
                    r.kind = Event::Kind::Up;
                    r.vehicle = e.vehicle;
                    r.time = std::max(e.time + latency(), v.last_up);
                    v.last_up = r.time;
                    r.bytes = wire::encode_command_reply(reply);
                    schedule(std::move(r));
                }
            }
            return Ok{};
        }
        case Event::Kind::SmsUp: {
            if (outage(v, e.time)) {  // the SMS centre holds it until coverage returns
                e.time = after_outages(v, e.time) + sms_latency();
                schedule(std::move(e));
                return Ok{};
            }
            if (srv_) srv_->handle_device_sms(v.spec.phone, e.text);
            drain_sms_outbox(e.time);
            return Ok{};
        }
        case Event::Kind::SmsDown: {
            if (outage(v, e.time)) {
                e.time = after_outages(v, e.time) + sms_latency();
                schedule(std::move(e));
                return Ok{};
            }
            const std::string gateway = v.trk.config().sms_gateway;
            const auto replies = v.trk.on_sms({gateway, e.text}, e.time);
            for (const auto& r : replies) {
                Event u;
                u.kind = Event::Kind::SmsUp;
                u.vehicle = e.vehicle;
                u.time = e.time + sms_latency();
                u.text = r.text;
                schedule(std::move(u));
            }
            return Ok{};
        }
        case Event::Kind::Command: {
            bool session = false;
            if (srv_) {
                const auto t = srv_->send_command(v.spec.imei, e.text);
                session = t && t->channel == server::CommandChannel::Session;
                tickets_.emplace_back(v.spec.imei, t ? std::optional<std::uint32_t>(t->id) : std::nullopt);
            } else {
                const auto r = net::http_request(endpoint_.host, endpoint_.http_port, "POST", "/api/commands",
                                                 json{{"vehicle", v.spec.imei}, {"command", e.text}}.dump());
                if (!r) return fail(error(ScenarioErrorKind::ServerUnreachable, r.error()));
                session = r->status == 202 && json::parse(r->body, nullptr, false).value("channel", "") == "session";
            }
            if (session) schedule_down(e.vehicle, v.link->pushed(std::chrono::seconds(2)), e.time);
            drain_sms_outbox(e.time);
            return Ok{};
        }
    }
    return Ok{};
}

Expected<ScenarioReport, ScenarioError> Engine::run() {
    if (sc_.end <= sc_.start) return fail(error(ScenarioErrorKind::BadConfig, "scenario end must be after start"));
    if (sc_.tick_ms <= 0) return fail(error(ScenarioErrorKind::BadConfig, "tick must be positive"));
    if (auto ok = setup(); !ok) return fail(ok.error());

    // after the end a vehicle stops once its buffer has drained
    std::vector<bool> parked(vehicles_.size(), false);
    auto step = [&](TimestampMs now) -> Expected<Ok, ScenarioError> {
        while (!queue_.empty() && queue_.top().time <= now) {
            Event e = queue_.top();
            queue_.pop();
            if (auto ok = process(e); !ok) return fail(ok.error());
        }
        clock_ = now;
        for (std::size_t i = 0; i < vehicles_.size(); ++i)
            if (!parked[i])
                if (auto ok = tick(vehicles_[i], i, now); !ok) return fail(ok.error());
        ++ticks_;
        return Ok{};
    };
    TimestampMs now = sc_.start;
    for (; now < sc_.end; now += sc_.tick_ms)
        if (auto ok = step(now); !ok) return fail(ok.error());

    // settle, bounded so a deep-sleeping or cut-off tracker cannot stall
    auto settled = [&] {
        bool all = true;
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            if (!parked[i] && vehicles_[i].trk.state().buffer.size() == 0) parked[i] = true;
            all = all && parked[i];
        }
        return all && queue_.empty();
    };
    for (const TimestampMs cap = sc_.end + kSettleMs; now < cap && !settled(); now += sc_.tick_ms)
        if (auto ok = step(now); !ok) return fail(ok.error());
    clock_ = now;
    return build_report();
}

// ---- oracles ----------------------------------------------------------------------

std::string join_first(const std::vector<std::string>& items, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < items.size() && i < n; ++i) out += (i ? "; " : "") + items[i];
    if (items.size() > n) out += "; +" + std::to_string(items.size() - n) + " more";
    return out;
}

/// Every tracker Overspeed record sits inside a violation run found in the
/// stored data, and every run of at least `min_run_s` has an Overspeed record
/// since the speed last fell below the hysteresis floor.
std::vector<std::string> check_overspeed(std::span<const wire::TelemetryRecord> recs, double limit, double floor,
                                         double min_run_s) {
    // stored speed is in 0.1 km/h steps while the tracker compares the raw fix
    constexpr double kHalfStep = 0.05;
    std::vector<std::string> bad;
    const auto loose = analytics::overspeed_report(recs, limit - kHalfStep);
    const auto runs = analytics::overspeed_report(recs, limit + kHalfStep);
    std::vector<TimestampMs> events;
    for (const auto& r : recs)
        if (r.event() == wire::EventCode::Overspeed) events.push_back(r.time());
    for (const auto t : events) {
        const bool inside = std::any_of(loose.begin(), loose.end(), [&](const analytics::Violation& v) {
            return t >= v.start && t <= v.start + static_cast<TimestampMs>(std::llround(v.duration_s * 1000.0));
        });
        if (!inside) bad.push_back("event at " + format_iso8601(t) + " outside any run");
    }
    for (const auto& v : runs) {
        if (v.duration_s < min_run_s) continue;
        const TimestampMs end = v.start + static_cast<TimestampMs>(std::llround(v.duration_s * 1000.0));
        TimestampMs episode = std::numeric_limits<TimestampMs>::min();
        for (const auto& r : recs) {
            if (r.time() >= v.start) break;
            if (r.fix_valid() && r.speed_kmh() < floor - kHalfStep) episode = r.time();
        }
        const bool seen =
            std::any_of(events.begin(), events.end(), [&](TimestampMs t) { return t > episode && t <= end; });
        if (!seen) bad.push_back("run at " + format_iso8601(v.start) + " without an event");
    }
    return bad;
}

ScenarioReport Engine::build_report() {
    ScenarioReport rep;
    rep.name = sc_.name;
    rep.seed = sc_.seed;
    rep.start = sc_.start;
    rep.end = sc_.end;
    rep.ticks = ticks_;
    rep.delivery_log = std::move(log_);

    std::vector<server::Alert> alerts;
    if (srv_) alerts = srv_->alerts(0);

    std::vector<std::string> loss, dups, order, undelivered, buffer, overspeed;
    for (auto& v : vehicles_) {
        const auto& st = v.trk.state();
        VehicleReport vr;
        vr.imei = v.spec.imei;
        vr.label = v.spec.label;
        vr.produced = st.records_produced;
        vr.acked = st.records_acked;
        vr.buffered = st.buffer.size();
        vr.peak_buffer_bytes = v.peak_bytes;
        vr.evicted = st.buffer.evicted();
        vr.route_km = v.odometer_m / 1000.0;
        const std::string id = std::to_string(v.spec.imei);

        if (vr.peak_buffer_bytes >= sc_.expect.max_buffer_bytes)
            buffer.push_back(id + " peaked at " + std::to_string(vr.peak_buffer_bytes) + " B");

        if (srv_) {
            const auto persisted = srv_->persisted_records(v.spec.imei);
            vr.stored = persisted.size();
            std::set<std::uint32_t> stored;
            std::optional<std::uint32_t> last_normal, last_priority;
            for (const auto& p : persisted) {
                if (!stored.insert(p.record.seq).second) dups.push_back(id + " seq " + std::to_string(p.record.seq));
                auto& last = p.record.priority() ? last_priority : last_normal;
                if (last && p.record.seq <= *last)
                    order.push_back(id + " seq " + std::to_string(p.record.seq) + " after " + std::to_string(*last));
                last = p.record.seq;
            }
            std::set<std::uint32_t> held;
            for (const auto& r : st.buffer.peek(st.buffer.size())) held.insert(r.seq);
            std::uint64_t missing = 0;
            for (std::uint32_t s = 1; s <= vr.produced; ++s)
                if (!stored.count(s) && !held.count(s)) ++missing;
            if (missing > vr.evicted)
                loss.push_back(id + ": " + std::to_string(missing - vr.evicted) + " records neither stored nor buffered");
            if (sc_.expect.full_delivery && (stored.size() != vr.produced || vr.buffered != 0))
                undelivered.push_back(id + ": stored " + std::to_string(stored.size()) + " of " +
                                      std::to_string(vr.produced));

            for (const auto& a : alerts) {
                if (a.imei != v.spec.imei || !a.seq) continue;
                ++vr.alerts;
                const auto it = v.alert_records.find(*a.seq);
                if (it == v.alert_records.end()) continue;
                const TimestampMs lat = a.received_at - it->second;
                vr.max_alert_latency_ms = std::max(vr.max_alert_latency_ms.value_or(lat), lat);
            }

            if (sc_.expect.overspeed_consistency) {
                const auto& cfg = v.trk.config();
                const auto recs = srv_->all_records(v.spec.imei);
                const double min_run = cfg.overspeed_sustain_s + cfg.time_trigger_moving_s;
                for (auto& b : check_overspeed(recs, cfg.speed_limit_kmh,
                                               cfg.speed_limit_kmh - cfg.overspeed_hysteresis_kmh, min_run))
                    overspeed.push_back(id + " " + b);
            }
        } else {
            if (vr.acked + vr.buffered + vr.evicted < vr.produced)
                loss.push_back(id + ": acked + buffered < produced");
            if (sc_.expect.full_delivery && (vr.acked != vr.produced || vr.buffered != 0))
                undelivered.push_back(id + ": acked " + std::to_string(vr.acked) + " of " +
                                      std::to_string(vr.produced));
        }
        rep.vehicles.push_back(std::move(vr));
    }

    auto add = [&](std::string name, const std::vector<std::string>& problems) {
        rep.oracles.push_back({std::move(name), problems.empty(), join_first(problems, 3)});
    };
    add("no_loss", loss);
    if (srv_) {
        add("no_duplicates", dups);
        add("seq_order", order);
    }
    if (sc_.expect.full_delivery) add("full_delivery", undelivered);
    add("buffer_peak", buffer);
    if (srv_ && sc_.expect.overspeed_consistency) add("overspeed_consistency", overspeed);
    if (srv_ && !tickets_.empty()) {
        std::vector<std::string> unsettled;
        for (const auto& [imei, id] : tickets_) {
            const auto t = id ? srv_->command(*id) : std::nullopt;
            if (!t) unsettled.push_back(std::to_string(imei) + ": not accepted");
            else if (t->state != server::CommandState::Acked)
                unsettled.push_back(std::to_string(imei) + " #" + std::to_string(*id) + " " +
                                    std::string(server::to_string(t->state)));
        }
        add("commands", unsettled);
    }

    for (const auto& d : sc_.expect.daily_km) {
        OracleResult o;
        o.name = "daily_km " + std::to_string(d.imei) + " " + format_date(d.date);
        if (!srv_) {
            o.pass = false;
            o.detail = "needs a local store";
        } else {
            const auto recs = srv_->all_records(d.imei);
            const auto rows = analytics::daily_mileage(recs, {d.date.year, d.date.month}, sc_.utc_offset_min);
            const auto it = std::find_if(rows.begin(), rows.end(), [&](const analytics::DayRow& r) { return r.day == d.date; });
            const double got = it == rows.end() ? 0.0 : it->km;
            const double err = d.km == 0.0 ? std::abs(got) : std::abs(got - d.km) / d.km * 100.0;
            o.pass = err <= d.tolerance_pct;
            o.detail = "got " + analytics::format_fixed(got, 3) + " km, want " + analytics::format_fixed(d.km, 3) +
                       " km +/- " + analytics::format_fixed(d.tolerance_pct, 2) + "%";
        }
        rep.oracles.push_back(std::move(o));
    }
    return rep;
}

}  // namespace

bool ScenarioReport::passed() const {
    return std::all_of(oracles.begin(), oracles.end(), [](const OracleResult& o) { return o.pass; });
}

Expected<ScenarioReport, ScenarioError> run_scenario(const Scenario& scenario, const RunOptions& options) {
    Engine engine(scenario, options);
    return engine.run();
}

}  // namespace radfleet::sim
