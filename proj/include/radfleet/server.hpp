#pragma once

// Transport-agnostic ingest core: registry, ack-after-write ingest, latest
// position cache, alert feed, command relay, missions and live event fan-out.
// Socket and HTTP front ends live in net.hpp / api.hpp and only call in here.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "radfleet/analytics.hpp"
#include "radfleet/expected.hpp"
#include "radfleet/geo.hpp"
#include "radfleet/store.hpp"
#include "radfleet/time.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::server {

using Clock = std::function<TimestampMs()>;
TimestampMs system_clock_ms();

struct ServerConfig {
    std::filesystem::path data_dir = "data";
    std::string bind_address = "0.0.0.0";
    std::uint16_t tcp_port = 5027;
    std::uint16_t udp_port = 5028;
    std::uint16_t http_port = 8080;
    bool sms_enabled = true;
    bool sync_writes = false;
    int utc_offset_min = analytics::kDefaultUtcOffsetMin;
    std::size_t stream_backlog = 1000;
    double staleness_s = analytics::kDefaultStalenessS;
    std::string sms_gateway_number = "+10000000000";
    std::vector<store::DeviceInfo> registry_seed;  // added on open when missing
    std::vector<geo::GeofenceZone> zones;
    std::vector<analytics::MaintenanceItem> maintenance;
};

/// JSON config; relative data_dir is resolved against `base_dir`.
Expected<ServerConfig, std::string> parse_server_config(std::string_view json_text,
                                                        const std::filesystem::path& base_dir = {});
Expected<ServerConfig, std::string> load_server_config(const std::filesystem::path& path);

enum class IngestError { Unauthorized, StorageFailure };
std::string_view to_string(IngestError e);

enum class CommandState { Queued, Delivered, Acked, Failed };
enum class CommandChannel { None, Session, Sms };
std::string_view to_string(CommandState s);
std::string_view to_string(CommandChannel c);

struct CommandTicket {
    std::uint32_t id = 0;
    std::uint64_t imei = 0;
    std::string text;
    CommandState state = CommandState::Queued;
    CommandChannel channel = CommandChannel::None;
    TimestampMs created_at = 0;
    TimestampMs updated_at = 0;
    std::string reply;
};

enum class CommandError { UnknownDevice, BadCommand, NoRoute };
std::string_view to_string(CommandError e);

struct Alert {
    std::uint64_t id = 0;
    std::uint64_t imei = 0;
    std::string kind;  // event name, "Tamper" or "SmsPosition"
    TimestampMs time = 0;         // device time
    TimestampMs received_at = 0;  // server time
    std::optional<std::uint32_t> seq;
    geo::GeoPoint position;
    std::string detail;
};

struct LatestPosition {
    store::DeviceInfo device;
    std::optional<wire::TelemetryRecord> record;  // newest valid fix
    double age_s = 0.0;
};

struct StreamEvent {
    std::uint64_t id = 0;
    std::string type;  // "position" | "alert" | "command" | "disconnect"
    std::uint64_t imei = 0;
    std::string data;  // one JSON object
};

struct StreamFilter {
    std::set<std::uint64_t> vehicles;  // empty = all
    bool positions = true;
    bool alerts = true;
    bool commands = true;
};

/// Bounded per-subscriber queue. When the backlog is exceeded the
/// subscription is closed: queued events stay readable, followed by one
/// "disconnect" event.
class Subscription {
public:
    Subscription(StreamFilter filter, std::size_t capacity) : filter_(std::move(filter)), capacity_(capacity) {}

    /// Waits up to `wait` for the next event. nullopt on timeout or once the
    /// closed subscription is fully drained.
    std::optional<StreamEvent> pop(std::chrono::milliseconds wait = std::chrono::milliseconds(0));
    bool closed() const;
    std::string close_reason() const;
    void close(const std::string& reason = "client");
    std::size_t backlog() const;

private:
    friend class IngestServer;
    bool offer(const StreamEvent& e);  // false once closed
    bool wants(const StreamEvent& e) const;

    StreamFilter filter_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<StreamEvent> queue_;
    bool closed_ = false;
    bool disconnect_sent_ = false;
    std::string reason_;
};

enum class MissionError { UnknownDevice, BadWindow, Overlap };
std::string_view to_string(MissionError e);

struct Stats {
    std::size_t stored_records = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t tampers = 0;
    std::uint64_t rejected_logins = 0;
    std::size_t subscribers = 0;
};

/// Delivers a command frame over a live device session.
using SessionSink = std::function<void(const wire::CommandFrame&)>;

class IngestServer {
public:
    static Expected<std::unique_ptr<IngestServer>, std::string> open(ServerConfig config, Clock clock = system_clock_ms,
                                                                     store::RecordStore::Options store_options = {});

    const ServerConfig& config() const { return config_; }
    TimestampMs now() const { return clock_(); }

    // ---- registry ----
    Expected<Ok, store::StoreError> add_device(store::DeviceInfo info);
    Expected<Ok, store::StoreError> set_enabled(std::uint64_t imei, bool enabled);
    std::vector<store::DeviceInfo> devices() const;
    std::optional<store::DeviceInfo> device(std::uint64_t imei) const;

    // ---- ingest ----
    /// Registered and enabled.
    bool authenticate(std::uint64_t imei);

    /// Appends every fresh (imei, seq) before returning the ack. Duplicates
    /// count toward the ack but are not stored again.
    Expected<wire::Ack, IngestError> ingest(std::uint64_t imei, std::span<const wire::TelemetryRecord> records,
                                            store::Transport transport);

    /// Text from the simulated SMS gateway. Position messages update the live
    /// view; replies from a device phone settle its oldest SMS command.
    void handle_device_sms(std::string_view from, std::string_view text);

    // ---- queries ----
    std::vector<LatestPosition> latest_positions() const;
    /// from <= timestamp < to, ascending by (timestamp, seq).
    std::vector<wire::TelemetryRecord> query_track(std::uint64_t imei, TimestampMs from, TimestampMs to) const;
    std::vector<wire::TelemetryRecord> all_records(std::uint64_t imei) const;
    std::vector<store::PersistedRecord> persisted_records(std::uint64_t imei) const;  // arrival order
    std::vector<Alert> alerts(TimestampMs since = 0) const;  // received_at >= since
    Stats stats() const;

    // ---- commands ----
    Expected<CommandTicket, CommandError> send_command(std::uint64_t imei, std::string_view text);
    std::vector<CommandTicket> commands(std::optional<std::uint64_t> imei = std::nullopt) const;
    std::optional<CommandTicket> command(std::uint32_t id) const;
    void on_command_reply(std::uint64_t imei, const wire::CommandReplyFrame& reply);
    /// Returns a token for detach. A newer session replaces an older one.
    std::uint64_t attach_session(std::uint64_t imei, SessionSink sink);
    void detach_session(std::uint64_t imei, std::uint64_t token);
    bool has_session(std::uint64_t imei) const;
    /// SMS the gateway should deliver to devices; drains the outbox.
    std::vector<wire::SmsMessage> take_sms_outbox();

    // ---- missions ----
    Expected<analytics::Mission, MissionError> create_mission(analytics::Mission m);
    std::vector<analytics::Mission> missions() const;

    // ---- live stream ----
    std::shared_ptr<Subscription> subscribe(StreamFilter filter = {});

private:
    IngestServer(ServerConfig config, Clock clock, store::RecordStore store);

    void load_side_files();
    void update_latest(std::uint64_t imei, const wire::TelemetryRecord& r);
    void publish(std::string type, std::uint64_t imei, std::string data);
    void raise_alert(Alert a, bool persist);
    void transition(CommandTicket& t, CommandState s, CommandChannel ch, std::string reply);
    void append_jsonl(const char* file, const std::string& line);
    void save_missions();

    ServerConfig config_;
    Clock clock_;
    mutable std::mutex mu_;
    store::RecordStore store_;
    std::map<std::uint64_t, wire::TelemetryRecord> latest_;
    std::vector<Alert> alerts_;
    std::uint64_t next_alert_id_ = 1;
    std::map<std::uint32_t, CommandTicket> tickets_;
    std::uint32_t next_command_id_ = 1;
    struct Session {
        std::uint64_t token = 0;
        SessionSink sink;
    };
    std::map<std::uint64_t, Session> sessions_;
    std::uint64_t next_session_token_ = 1;
    std::vector<wire::SmsMessage> sms_outbox_;
    std::vector<analytics::Mission> missions_;
    std::vector<std::weak_ptr<Subscription>> subscribers_;
    std::uint64_t next_event_id_ = 1;
    std::uint64_t tampers_ = 0;
    std::uint64_t rejected_logins_ = 0;
};

}  // namespace radfleet::server
