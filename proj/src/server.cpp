#include "radfleet/server.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "radfleet/json_io.hpp"
#include "radfleet/tracker.hpp"

namespace radfleet::server {

using json = nlohmann::json;

TimestampMs system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---- config -----------------------------------------------------------------------

namespace {

analytics::MaintenanceItem maintenance_from_json(const json& j) {
    analytics::MaintenanceItem m;
    m.name = j.at("name").get<std::string>();
    if (j.contains("vehicle") && !j["vehicle"].is_null()) m.vehicle = j["vehicle"].get<std::uint64_t>();
    m.vehicle_class = j.value("vehicle_class", "");
    m.interval_km = j.at("interval_km").get<double>();
    m.last_service_odometer_km = j.value("last_service_odometer_km", 0.0);
    m.warn_fraction = j.value("warn_fraction", 0.9);
    if (m.interval_km <= 0) throw std::invalid_argument("maintenance '" + m.name + "': interval_km must be > 0");
    if (!m.vehicle && m.vehicle_class.empty())
        throw std::invalid_argument("maintenance '" + m.name + "': needs vehicle or vehicle_class");
    return m;
}

std::uint16_t port_of(const json& j, const char* key, std::uint16_t dflt) {
    if (!j.contains(key)) return dflt;
    const auto v = j[key].get<std::int64_t>();
    if (v < 0 || v > 65535) throw std::invalid_argument(std::string(key) + " out of range");
    return static_cast<std::uint16_t>(v);
}

bool write_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!(out << text)) return false;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    return !ec;
}

}  // namespace

Expected<ServerConfig, std::string> parse_server_config(std::string_view json_text,
                                                        const std::filesystem::path& base_dir) {
    static const std::set<std::string> known{"data_dir",      "bind",         "tcp_port",          "udp_port",
                                             "http_port",     "sms_enabled",  "sync_writes",       "utc_offset",
                                             "stream_backlog", "staleness_s", "sms_gateway_number", "devices",
                                             "zones",         "maintenance"};
    ServerConfig c;
    try {
        const auto j = json::parse(json_text);
        if (!j.is_object()) return fail(std::string("config must be a JSON object"));
        for (const auto& [k, v] : j.items())
            if (!known.count(k)) return fail("unknown config key '" + k + "'");
        if (j.contains("data_dir")) {
            std::filesystem::path p = j["data_dir"].get<std::string>();
            c.data_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        c.bind_address = j.value("bind", c.bind_address);
        c.tcp_port = port_of(j, "tcp_port", c.tcp_port);
        c.udp_port = port_of(j, "udp_port", c.udp_port);
        c.http_port = port_of(j, "http_port", c.http_port);
        c.sms_enabled = j.value("sms_enabled", c.sms_enabled);
        c.sync_writes = j.value("sync_writes", c.sync_writes);
        if (j.contains("utc_offset")) {
            const auto off = parse_utc_offset(j["utc_offset"].get<std::string>());
            if (!off) return fail(std::string("utc_offset must look like +03:30"));
            c.utc_offset_min = *off;
        }
        c.stream_backlog = j.value("stream_backlog", c.stream_backlog);
        if (c.stream_backlog == 0) return fail(std::string("stream_backlog must be > 0"));
        c.staleness_s = j.value("staleness_s", c.staleness_s);
        c.sms_gateway_number = j.value("sms_gateway_number", c.sms_gateway_number);
        if (j.contains("devices"))
            for (const auto& d : j["devices"]) c.registry_seed.push_back(json_io::device_from_json(d));
        if (j.contains("zones")) {
            for (const auto& z : j["zones"]) {
                auto zone = tracker::parse_zone_spec(z.get<std::string>());
                if (!zone) return fail("zone '" + z.get<std::string>() + "': " + zone.error());
                for (const auto& existing : c.zones)
                    if (existing.id() == zone->id()) return fail("duplicate zone id " + std::to_string(zone->id()));
                c.zones.push_back(*zone);
            }
            if (c.zones.size() > geo::kMaxZones) return fail(std::string("more than 150 zones"));
        }
        if (j.contains("maintenance"))
            for (const auto& m : j["maintenance"]) c.maintenance.push_back(maintenance_from_json(m));
    } catch (const json::exception& e) {
        return fail(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        return fail(std::string("config: ") + e.what());
    }
    return c;
}

Expected<ServerConfig, std::string> load_server_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return fail("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_server_config(ss.str(), path.parent_path());
}

// ---- enums ------------------------------------------------------------------------

std::string_view to_string(IngestError e) {
    return e == IngestError::Unauthorized ? "Unauthorized" : "StorageFailure";
}

std::string_view to_string(CommandState s) {
    switch (s) {
        case CommandState::Queued: return "Queued";
        case CommandState::Delivered: return "Delivered";
        case CommandState::Acked: return "Acked";
        case CommandState::Failed: return "Failed";
    }
    return "?";
}

std::string_view to_string(CommandChannel c) {
    switch (c) {
        case CommandChannel::None: return "none";
        case CommandChannel::Session: return "session";
        case CommandChannel::Sms: return "sms";
    }
    return "?";
}

std::string_view to_string(CommandError e) {
    switch (e) {
        case CommandError::UnknownDevice: return "UnknownDevice";
        case CommandError::BadCommand: return "BadCommand";
        case CommandError::NoRoute: return "NoRoute";
    }
    return "?";
}

std::string_view to_string(MissionError e) {
    switch (e) {
        case MissionError::UnknownDevice: return "UnknownDevice";
        case MissionError::BadWindow: return "BadWindow";
        case MissionError::Overlap: return "Overlap";
    }
    return "?";
}

// ---- subscription -----------------------------------------------------------------

std::optional<StreamEvent> Subscription::pop(std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return !queue_.empty() || closed_; });
    if (!queue_.empty()) {
        auto e = std::move(queue_.front());
        queue_.pop_front();
        return e;
    }
    if (closed_ && !disconnect_sent_) {
        disconnect_sent_ = true;
        return StreamEvent{0, "disconnect", 0, json{{"type", "disconnect"}, {"reason", reason_}}.dump()};
    }
    return std::nullopt;
}

bool Subscription::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::string Subscription::close_reason() const {
    std::lock_guard lock(mu_);
    return reason_;
}

void Subscription::close(const std::string& reason) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        closed_ = true;
        reason_ = reason;
    }
    cv_.notify_all();
}

std::size_t Subscription::backlog() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

bool Subscription::wants(const StreamEvent& e) const {
    if (!filter_.vehicles.empty() && !filter_.vehicles.count(e.imei)) return false;
    if (e.type == "position") return filter_.positions;
    if (e.type == "alert") return filter_.alerts;
    if (e.type == "command") return filter_.commands;
    return true;
}

bool Subscription::offer(const StreamEvent& e) {
    bool open = true;
    {
        std::lock_guard lock(mu_);
        if (closed_) return false;
        if (!wants(e)) return true;
        if (queue_.size() >= capacity_) {
            closed_ = true;
            reason_ = "overflow";
            open = false;
        } else {
            queue_.push_back(e);
        }
    }
    cv_.notify_all();
    return open;
}

// ---- server -----------------------------------------------------------------------

IngestServer::IngestServer(ServerConfig config, Clock clock, store::RecordStore store)
    : config_(std::move(config)), clock_(std::move(clock)), store_(std::move(store)) {}

Expected<std::unique_ptr<IngestServer>, std::string> IngestServer::open(ServerConfig config, Clock clock,
                                                                        store::RecordStore::Options store_options) {
    store_options.sync_writes = store_options.sync_writes || config.sync_writes;
    auto st = store::RecordStore::open(config.data_dir, store_options);
    if (!st) return fail("store " + config.data_dir.string() + ": " + std::string(store::to_string(st.error())));
    for (auto d : config.registry_seed) {
        if (st->device(d.imei)) continue;
        if (d.created_at == 0) d.created_at = clock();
        if (auto r = st->add_device(d); !r)
            return fail("seed device " + std::to_string(d.imei) + ": " + std::string(store::to_string(r.error())));
    }
    std::unique_ptr<IngestServer> s(new IngestServer(std::move(config), std::move(clock), std::move(*st)));
    s->load_side_files();
    return s;
}

void IngestServer::load_side_files() {
    const auto& dir = config_.data_dir;
    for (const auto& d : store_.devices()) {
        for (const auto& pr : store_.records(d.imei)) {
            update_latest(d.imei, pr.record);
            if (wire::is_alert(pr.record.event()))
                alerts_.push_back({0, d.imei, std::string(wire::to_string(pr.record.event())), pr.record.time(),
                                   pr.received_at, pr.record.seq, {pr.record.lat(), pr.record.lon()}, ""});
        }
    }
    auto each_line = [&](const char* file, auto fn) {
        std::ifstream in(dir / file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                fn(json::parse(line));
            } catch (const json::exception&) {
                // Torn last line after a crash.
            }
        }
    };
    each_line("alerts.jsonl", [&](const json& j) {
        Alert a;
        a.imei = j.at("imei").get<std::uint64_t>();
        a.kind = j.at("kind").get<std::string>();
        a.time = j.at("time_ms").get<TimestampMs>();
        a.received_at = j.at("received_at_ms").get<TimestampMs>();
        if (!j.at("seq").is_null()) a.seq = j["seq"].get<std::uint32_t>();
        a.position = {j.at("lat").get<double>(), j.at("lon").get<double>()};
        a.detail = j.value("detail", "");
        alerts_.push_back(a);
    });
    std::stable_sort(alerts_.begin(), alerts_.end(),
                     [](const Alert& a, const Alert& b) { return a.received_at < b.received_at; });
    for (auto& a : alerts_) a.id = next_alert_id_++;

    each_line("commands.jsonl", [&](const json& j) {
        CommandTicket t;
        t.id = j.at("id").get<std::uint32_t>();
        t.imei = j.at("imei").get<std::uint64_t>();
        t.text = j.at("text").get<std::string>();
        const auto state = j.at("state").get<std::string>();
        for (auto s : {CommandState::Queued, CommandState::Delivered, CommandState::Acked, CommandState::Failed})
            if (to_string(s) == state) t.state = s;
        const auto ch = j.at("channel").get<std::string>();
        for (auto c : {CommandChannel::None, CommandChannel::Session, CommandChannel::Sms})
            if (to_string(c) == ch) t.channel = c;
        t.created_at = j.at("created_at_ms").get<TimestampMs>();
        t.updated_at = j.at("updated_at_ms").get<TimestampMs>();
        t.reply = j.value("reply", "");
        tickets_[t.id] = t;
        next_command_id_ = std::max(next_command_id_, t.id + 1);
    });

    std::ifstream in(dir / "missions.json");
    if (in) {
        try {
            const auto j = json::parse(in);
            for (const auto& m : j.at("missions")) missions_.push_back(json_io::mission_from_json(m));
        } catch (const json::exception&) {
            missions_.clear();
        }
    }
}

void IngestServer::append_jsonl(const char* file, const std::string& line) {
    const auto path = config_.data_dir / file;
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) return;
    const std::string text = line + "\n";
    [[maybe_unused]] const auto w = ::write(fd, text.data(), text.size());
    if (config_.sync_writes) ::fdatasync(fd);
    ::close(fd);
}

void IngestServer::publish(std::string type, std::uint64_t imei, std::string data) {
    const StreamEvent e{next_event_id_++, std::move(type), imei, std::move(data)};
    std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& w) {
        const auto sub = w.lock();
        return !sub || !sub->offer(e);
    });
}

void IngestServer::update_latest(std::uint64_t imei, const wire::TelemetryRecord& r) {
    if (!r.fix_valid()) return;
    const auto it = latest_.find(imei);
    if (it == latest_.end() || r.time() > it->second.time()) latest_[imei] = r;
}

void IngestServer::raise_alert(Alert a, bool persist) {
    a.id = next_alert_id_++;
    if (persist) {
        json j = {{"imei", a.imei},
                  {"kind", a.kind},
                  {"time_ms", a.time},
                  {"received_at_ms", a.received_at},
                  {"lat", a.position.lat},
                  {"lon", a.position.lon},
                  {"detail", a.detail}};
        j["seq"] = a.seq ? json(*a.seq) : json(nullptr);
        append_jsonl("alerts.jsonl", j.dump());
    }
    auto data = json_io::to_json(a);
    data["type"] = "alert";
    publish("alert", a.imei, data.dump());
    alerts_.push_back(std::move(a));
}

Expected<Ok, store::StoreError> IngestServer::add_device(store::DeviceInfo info) {
    std::lock_guard lock(mu_);
    if (info.created_at == 0) info.created_at = clock_();
    return store_.add_device(info);
}

Expected<Ok, store::StoreError> IngestServer::set_enabled(std::uint64_t imei, bool enabled) {
    std::lock_guard lock(mu_);
    const auto* d = store_.device(imei);
    if (!d) return fail(store::StoreError::UnknownDevice);
    auto copy = *d;
    copy.enabled = enabled;
    return store_.update_device(copy);
}

std::vector<store::DeviceInfo> IngestServer::devices() const {
    std::lock_guard lock(mu_);
    return store_.devices();
}

std::optional<store::DeviceInfo> IngestServer::device(std::uint64_t imei) const {
    std::lock_guard lock(mu_);
    const auto* d = store_.device(imei);
    return d ? std::optional(*d) : std::nullopt;
}

bool IngestServer::authenticate(std::uint64_t imei) {
    std::lock_guard lock(mu_);
    const auto* d = store_.device(imei);
    if (d && d->enabled) return true;
    ++rejected_logins_;
    return false;
}

Expected<wire::Ack, IngestError> IngestServer::ingest(std::uint64_t imei,
                                                      std::span<const wire::TelemetryRecord> records,
                                                      store::Transport transport) {
    std::lock_guard lock(mu_);
    const auto* dev = store_.device(imei);
    if (!dev || !dev->enabled) return fail(IngestError::Unauthorized);
    const TimestampMs now = clock_();
    std::uint16_t accepted = 0;
    for (const auto& r : records) {
        const auto st = store_.append(imei, r, transport, now);
        if (!st) return fail(IngestError::StorageFailure);
        ++accepted;
        if (*st == store::AppendStatus::Duplicate) continue;
        if (*st == store::AppendStatus::Tamper) {
            ++tampers_;
            raise_alert({0, imei, "Tamper", r.time(), now, r.seq, {r.lat(), r.lon()},
                         "seq re-sent with different payload"},
                        true);
            continue;
        }
        update_latest(imei, r);
        json data = {{"type", "position"},
                     {"imei", imei},
                     {"label", dev->label},
                     {"transport", std::string(store::to_string(transport))},
                     {"record", json_io::to_json(r)}};
        publish("position", imei, data.dump());
        if (wire::is_alert(r.event()))
            raise_alert({0, imei, std::string(wire::to_string(r.event())), r.time(), now, r.seq, {r.lat(), r.lon()}, ""},
                        false);
    }
    return wire::Ack{accepted};
}

void IngestServer::handle_device_sms(std::string_view from, std::string_view text) {
    std::lock_guard lock(mu_);
    const TimestampMs now = clock_();
    const store::DeviceInfo* sender = nullptr;
    const auto devs = store_.devices();
    for (const auto& d : devs)
        if (!from.empty() && d.phone == from) sender = store_.device(d.imei);

    if (const auto pos = wire::parse_position_sms(text)) {
        const auto* dev = store_.device(pos->imei);
        if (dev && dev->enabled && (!sender || sender->imei == pos->imei)) {
            wire::RecordFields f;
            f.timestamp_ms = pos->timestamp_ms;
            f.fix_valid = true;
            f.lat = pos->lat;
            f.lon = pos->lon;
            f.speed_kmh = pos->speed_kmh;
            f.heading_deg = pos->heading_deg;
            f.event = pos->event;
            if (const auto r = wire::make_record(f)) {
                update_latest(pos->imei, *r);
                json data = {{"type", "position"},
                             {"imei", pos->imei},
                             {"label", dev->label},
                             {"transport", "sms"},
                             {"record", json_io::to_json(*r)}};
                publish("position", pos->imei, data.dump());
                if (wire::is_alert(pos->event))
                    raise_alert({0, pos->imei, std::string(wire::to_string(pos->event)), pos->timestamp_ms, now,
                                 std::nullopt, {pos->lat, pos->lon}, "via SMS"},
                                true);
            }
        }
    }

    if (!sender) return;
    for (auto& [id, t] : tickets_) {
        if (t.imei == sender->imei && t.channel == CommandChannel::Sms && t.state == CommandState::Delivered) {
            const bool err = text.substr(0, 3) == "ERR";
            transition(t, err ? CommandState::Failed : CommandState::Acked, CommandChannel::Sms, std::string(text));
            break;
        }
    }
}

std::vector<LatestPosition> IngestServer::latest_positions() const {
    std::lock_guard lock(mu_);
    const TimestampMs now = clock_();
    std::vector<LatestPosition> out;
    for (const auto& d : store_.devices()) {
        if (!d.enabled) continue;
        LatestPosition p{d, std::nullopt, 0.0};
        if (const auto it = latest_.find(d.imei); it != latest_.end()) {
            p.record = it->second;
            p.age_s = static_cast<double>(now - it->second.time()) / 1000.0;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<wire::TelemetryRecord> IngestServer::query_track(std::uint64_t imei, TimestampMs from,
                                                             TimestampMs to) const {
    std::lock_guard lock(mu_);
    std::vector<wire::TelemetryRecord> out;
    for (const auto& pr : store_.records(imei))
        if (pr.record.time() >= from && pr.record.time() < to) out.push_back(pr.record);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.timestamp_ms != b.timestamp_ms ? a.timestamp_ms < b.timestamp_ms : a.seq < b.seq;
    });
    return out;
}

std::vector<wire::TelemetryRecord> IngestServer::all_records(std::uint64_t imei) const {
    return query_track(imei, std::numeric_limits<TimestampMs>::min(), std::numeric_limits<TimestampMs>::max());
}

std::vector<store::PersistedRecord> IngestServer::persisted_records(std::uint64_t imei) const {
    std::lock_guard lock(mu_);
    const auto r = store_.records(imei);
    return {r.begin(), r.end()};
}

std::vector<Alert> IngestServer::alerts(TimestampMs since) const {
    std::lock_guard lock(mu_);
    std::vector<Alert> out;
    for (const auto& a : alerts_)
        if (a.received_at >= since) out.push_back(a);
    return out;
}

Stats IngestServer::stats() const {
    std::lock_guard lock(mu_);
    std::size_t subs = 0;
    for (const auto& w : subscribers_)
        if (!w.expired()) ++subs;
    return {store_.total_records(), store_.duplicates_dropped() - tampers_, tampers_, rejected_logins_, subs};
}

// ---- commands ---------------------------------------------------------------------

void IngestServer::transition(CommandTicket& t, CommandState s, CommandChannel ch, std::string reply) {
    t.state = s;
    t.channel = ch;
    t.updated_at = clock_();
    t.reply = std::move(reply);
    const json j = {{"id", t.id},
                    {"imei", t.imei},
                    {"text", t.text},
                    {"state", std::string(to_string(t.state))},
                    {"channel", std::string(to_string(t.channel))},
                    {"created_at_ms", t.created_at},
                    {"updated_at_ms", t.updated_at},
                    {"reply", t.reply}};
    append_jsonl("commands.jsonl", j.dump());
    auto data = json_io::to_json(t);
    data["type"] = "command";
    publish("command", t.imei, data.dump());
}

Expected<CommandTicket, CommandError> IngestServer::send_command(std::uint64_t imei, std::string_view text) {
    SessionSink sink;
    wire::CommandFrame frame;
    CommandTicket result;
    {
        std::lock_guard lock(mu_);
        const auto* dev = store_.device(imei);
        if (!dev) return fail(CommandError::UnknownDevice);
        if (!wire::parse_command(text)) return fail(CommandError::BadCommand);
        CommandTicket t;
        t.id = next_command_id_++;
        t.imei = imei;
        t.text = std::string(text);
        t.created_at = clock_();
        auto& ticket = tickets_[t.id] = t;
        transition(ticket, CommandState::Queued, CommandChannel::None, "");

        if (const auto s = sessions_.find(imei); s != sessions_.end()) {
            sink = s->second.sink;
            frame = {ticket.id, ticket.text};
            transition(ticket, CommandState::Delivered, CommandChannel::Session, "");
        } else if (config_.sms_enabled && !dev->phone.empty()) {
            sms_outbox_.push_back({dev->phone, ticket.text});
            transition(ticket, CommandState::Delivered, CommandChannel::Sms, "");
        } else {
            transition(ticket, CommandState::Failed, CommandChannel::None, "no route");
            return fail(CommandError::NoRoute);
        }
        result = ticket;
    }
    // Outside the lock: an in-process sink may answer straight away.
    if (sink) sink(frame);
    return result;
}

std::vector<CommandTicket> IngestServer::commands(std::optional<std::uint64_t> imei) const {
    std::lock_guard lock(mu_);
    std::vector<CommandTicket> out;
    for (const auto& [id, t] : tickets_)
        if (!imei || t.imei == *imei) out.push_back(t);
    return out;
}

std::optional<CommandTicket> IngestServer::command(std::uint32_t id) const {
    std::lock_guard lock(mu_);
    const auto it = tickets_.find(id);
    return it == tickets_.end() ? std::nullopt : std::optional(it->second);
}

void IngestServer::on_command_reply(std::uint64_t imei, const wire::CommandReplyFrame& reply) {
    std::lock_guard lock(mu_);
    const auto it = tickets_.find(reply.command_id);
    if (it == tickets_.end() || it->second.imei != imei || it->second.state != CommandState::Delivered) return;
    transition(it->second, reply.status == 0 ? CommandState::Acked : CommandState::Failed, it->second.channel,
               reply.text);
}

std::uint64_t IngestServer::attach_session(std::uint64_t imei, SessionSink sink) {
    std::lock_guard lock(mu_);
    const auto token = next_session_token_++;
    sessions_[imei] = {token, std::move(sink)};
    return token;
}

void IngestServer::detach_session(std::uint64_t imei, std::uint64_t token) {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(imei);
    if (it != sessions_.end() && it->second.token == token) sessions_.erase(it);
}

bool IngestServer::has_session(std::uint64_t imei) const {
    std::lock_guard lock(mu_);
    return sessions_.count(imei) > 0;
}

std::vector<wire::SmsMessage> IngestServer::take_sms_outbox() {
    std::lock_guard lock(mu_);
    return std::exchange(sms_outbox_, {});
}

// ---- missions ---------------------------------------------------------------------

void IngestServer::save_missions() {
    json arr = json::array();
    for (const auto& m : missions_) {
        auto j = json_io::to_json(m);
        j["start"] = m.start;
        j["end"] = m.end;
        arr.push_back(j);
    }
    write_atomic(config_.data_dir / "missions.json", json{{"missions", arr}}.dump(2) + "\n");
}

Expected<analytics::Mission, MissionError> IngestServer::create_mission(analytics::Mission m) {
    std::lock_guard lock(mu_);
    if (!store_.device(m.vehicle)) return fail(MissionError::UnknownDevice);
    if (m.end <= m.start) return fail(MissionError::BadWindow);
    for (const auto& other : missions_)
        if (analytics::missions_overlap(m, other)) return fail(MissionError::Overlap);
    std::uint64_t id = 1;
    for (const auto& other : missions_) id = std::max(id, other.id + 1);
    m.id = id;
    missions_.push_back(m);
    save_missions();
    return m;
}

std::vector<analytics::Mission> IngestServer::missions() const {
    std::lock_guard lock(mu_);
    return missions_;
}

std::shared_ptr<Subscription> IngestServer::subscribe(StreamFilter filter) {
    std::lock_guard lock(mu_);
    auto sub = std::make_shared<Subscription>(std::move(filter), config_.stream_backlog);
    subscribers_.push_back(sub);
    return sub;
}

}  // namespace radfleet::server
