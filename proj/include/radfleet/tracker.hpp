#pragma once

// Tracker firmware as a deterministic, clock-driven state machine.
//
// One SensorFrame arrives per 1 s tick. step() consumes it, decides which
// records to produce (time / distance / angle triggers, ignition and alert
// events), appends them to the flash buffer, and decides what to put on the
// modem. Acks, server commands and SMS arrive through the on_* entry points.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/geo.hpp"
#include "radfleet/nmea.hpp"
#include "radfleet/record_buffer.hpp"
#include "radfleet/time.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::tracker {

inline constexpr std::size_t kMaxAuthorizedKeys = 50;
inline constexpr std::size_t kMaxAuthorizedNumbers = 8;
inline constexpr double kBatteryCapacityMah = 1800.0;
inline constexpr double kActiveCurrentMa = 85.0;  // midpoint of the 70-100 mA average
inline constexpr double kNormalSleepCurrentMa = 10.0;
inline constexpr double kDeepSleepCurrentMa = 3.0;
inline constexpr double kChargeCurrentMa = 500.0;
inline constexpr double kMinExternalVolts = 6.0;
inline constexpr double kStandardGravityMps2 = 9.80665;

struct Accel {
    double x_mg = 0.0;  // longitudinal, + forward
    double y_mg = 0.0;  // lateral
    double z_mg = 1000.0;
};

struct SensorFrame {
    TimestampMs tick_time = 0;
    std::vector<std::string> nmea_lines;
    bool ignition = false;
    std::uint8_t digital_in = 0;  // 4 bits
    std::array<double, 2> analog_mv{};
    Accel accel;
    double fuel_level_pct = 0.0;
    double fuel_rate_lph = 0.0;
    std::optional<double> can_odometer_m;
    bool gsm_available = true;
    bool gsm_jammed = false;
    std::optional<std::uint64_t> driver_key;
    bool panic_button = false;
    double external_power_v = 12.0;
};

enum class Transport { Tcp, Udp };

struct EcoThresholds {
    double harsh_accel_mps2 = 2.5;
    double harsh_brake_mps2 = -3.0;
    double harsh_corner_mps2 = 3.0;
    double sustain_s = 1.0;
};

struct TrackerConfig {
    std::uint64_t imei = 0;

    double time_trigger_moving_s = 60.0;
    double time_trigger_stationary_s = 300.0;
    double distance_trigger_m = 200.0;
    double angle_trigger_deg = 10.0;
    double moving_speed_kmh = 3.0;

    double speed_limit_kmh = 90.0;
    double overspeed_sustain_s = 10.0;
    double overspeed_hysteresis_kmh = 5.0;

    double towing_distance_m = 100.0;
    double towing_accel_mg = 100.0;
    double towing_sustain_s = 5.0;
    double motion_threshold_mg = 100.0;

    EcoThresholds eco;

    double t_normal_s = 300.0;
    double t_deep_s = 3600.0;

    std::vector<geo::GeofenceZone> zones;
    std::vector<std::uint64_t> authorized_keys;
    std::vector<std::string> authorized_numbers;

    std::string server_host = "127.0.0.1";
    std::uint16_t server_port = wire::kDefaultTcpPort;
    Transport transport = Transport::Tcp;
    std::string sms_gateway = "+10000000000";

    double flush_interval_s = 60.0;
    double retransmit_timeout_s = 5.0;
    int max_send_attempts = wire::kMaxSendAttempts;
    std::size_t buffer_capacity_bytes = kFlashCapacityBytes;
};

struct ConfigError {
    int line = 0;
    std::string message;
};

/// key=value text, '#' comments. List keys (zone, authorized_key,
/// authorized_number) may repeat. Caps: 150 zones, 50 keys, 8 numbers.
Expected<TrackerConfig, ConfigError> parse_config(std::string_view text);

/// "<id> circle <lat> <lon> <radius_m>" | "<id> rect <lat_sw> <lon_sw> <lat_ne> <lon_ne>"
/// | "<id> tri <lat> <lon> <lat> <lon> <lat> <lon>"
Expected<geo::GeofenceZone, std::string> parse_zone_spec(std::string_view spec);

enum class ParamError { UnknownParam, BadValue };
std::string_view to_string(ParamError e);

/// Mutates one scalar TrackerConfig field by its config-file name.
Expected<Ok, ParamError> set_param(TrackerConfig& config, std::string_view key, std::string_view value);

enum class PowerMode { Active, Idle, NormalSleep, DeepSleep };
std::string_view to_string(PowerMode m);

inline bool gps_powered(PowerMode m) { return m == PowerMode::Active || m == PowerMode::Idle; }
inline bool modem_powered(PowerMode m) { return m != PowerMode::DeepSleep; }

struct DetectorState {
    bool initialized = false;
    bool prev_ignition = false;
    bool prev_panic = false;
    bool prev_jammed = false;
    std::uint8_t prev_digital_in = 0;
    bool prev_external_ok = true;

    std::optional<TimestampMs> overspeed_since;
    bool overspeed_active = false;

    std::optional<geo::GeoPoint> park_anchor;
    std::optional<TimestampMs> tow_accel_since;
    bool tow_reported = false;

    std::optional<TimestampMs> harsh_accel_since;
    std::optional<TimestampMs> harsh_brake_since;
    std::optional<TimestampMs> harsh_corner_since;
    bool harsh_accel_active = false;
    bool harsh_brake_active = false;
    bool harsh_corner_active = false;

    bool zone_baseline = false;

    friend bool operator==(const DetectorState&, const DetectorState&) = default;
};

struct LinkState {
    enum class Pending { None, Login, Data };

    bool session_open = false;
    Pending pending = Pending::None;
    std::vector<std::uint8_t> in_flight;  // encoded frame awaiting its ack
    std::vector<std::uint32_t> in_flight_seqs;
    int attempts = 0;
    TimestampMs last_send = 0;
    std::optional<TimestampMs> last_flush;

    friend bool operator==(const LinkState&, const LinkState&) = default;
};

struct AuditEntry {
    TimestampMs time = 0;
    std::string origin;
    std::string command;
    std::string outcome;
    friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

struct TrackerState {
    explicit TrackerState(std::size_t buffer_capacity = kFlashCapacityBytes) : buffer(buffer_capacity) {}

    PowerMode power_mode = PowerMode::Active;
    /// Battery charge in mA*ms (integer so that drain arithmetic is exact).
    std::int64_t battery_charge = full_charge();
    std::optional<nmea::Fix> last_fix;       // latest valid fix
    std::optional<nmea::Fix> last_sent_fix;  // fix of the latest position record
    std::optional<TimestampMs> last_record_time;
    std::optional<TimestampMs> last_tick;
    TimestampMs last_activity = 0;
    double odometer_m = 0.0;
    std::set<std::uint16_t> zone_membership;
    RecordBuffer buffer;
    std::uint8_t outputs = 0;
    std::uint32_t next_seq = 1;
    bool authorized = true;

    DetectorState detectors;
    LinkState link;
    std::vector<AuditEntry> audit;

    std::uint64_t records_produced = 0;
    std::uint64_t records_acked = 0;
    std::uint64_t gps_epochs_consumed = 0;

    static constexpr std::int64_t full_charge() {
        return static_cast<std::int64_t>(kBatteryCapacityMah) * 3'600'000;
    }
    double battery_mah() const { return static_cast<double>(battery_charge) / 3'600'000.0; }
    double battery_mv() const;

    friend bool operator==(const TrackerState&, const TrackerState&) = default;
};

struct DataFrame {
    std::vector<std::uint8_t> bytes;
    bool login = false;
    std::size_t record_count = 0;
    bool retransmission = false;
    friend bool operator==(const DataFrame&, const DataFrame&) = default;
};

using Outbound = std::variant<DataFrame, wire::SmsMessage>;

struct StepOutput {
    std::vector<wire::TelemetryRecord> records;
    std::vector<Outbound> outbound;
};

enum class StepError { ClockRegression };

/// Advances one tick. Records are in the buffer before anything is sent.
Expected<StepOutput, StepError> step(TrackerState& state, const SensorFrame& frame, const TrackerConfig& config);

enum class AcquisitionTrigger { None, Periodic, DistanceTrig, AngleTrig };

/// Which position trigger fires for a valid fix; Angle > Distance > Periodic
/// when several fire together.
AcquisitionTrigger evaluate_acquisition(const TrackerState& state, const nmea::Fix& fix, const TrackerConfig& config);

struct DetectedEvent {
    wire::EventCode code{};
    std::uint16_t zone_id = 0;
    friend bool operator==(const DetectedEvent&, const DetectedEvent&) = default;
};

/// Edge and sustained-condition detectors. `fix` is the current valid fix if
/// the GPS produced one this tick. Updates detector memory in `state`.
std::vector<DetectedEvent> detect_events(TrackerState& state, const SensorFrame& frame,
                                         const std::optional<nmea::Fix>& fix, const TrackerConfig& config);

/// Integrates battery over `dt_s` and applies sleep/wake transitions.
/// Returns true when external power just dropped below 6 V.
bool power_tick(TrackerState& state, const SensorFrame& frame, const TrackerConfig& config, double dt_s);

/// Feeds a server Ack for the frame in flight; may return the next frame.
std::vector<Outbound> on_ack(TrackerState& state, const wire::Ack& ack, const TrackerConfig& config, TimestampMs now);

enum class CommandStatus { Ok, UnknownParam, BadValue, Unauthorized, NoFix, Rejected };
std::string_view to_string(CommandStatus s);

struct CommandResult {
    CommandStatus status = CommandStatus::Ok;
    std::string reply;  // empty when the command is silently ignored
};

struct SessionOrigin {};
struct SmsOrigin {
    std::string phone;
};
using CommandOrigin = std::variant<SessionOrigin, SmsOrigin>;

/// SMS-origin commands must come from an authorized number; GPRS-session
/// commands are trusted (the session is authenticated).
CommandResult handle_command(TrackerState& state, TrackerConfig& config, const wire::Command& cmd,
                             const CommandOrigin& origin, TimestampMs now);

/// Server command over the live session -> reply frame.
wire::CommandReplyFrame on_command(TrackerState& state, TrackerConfig& config, const wire::CommandFrame& cmd,
                                   TimestampMs now);

/// Inbound SMS -> zero or one reply SMS.
std::vector<wire::SmsMessage> on_sms(TrackerState& state, TrackerConfig& config, const wire::SmsMessage& sms,
                                     TimestampMs now);

/// Convenience owner of one device's config and state.
class Tracker {
public:
    explicit Tracker(TrackerConfig config) : config_(std::move(config)), state_(config_.buffer_capacity_bytes) {}

    Expected<StepOutput, StepError> step(const SensorFrame& frame) { return tracker::step(state_, frame, config_); }
    std::vector<Outbound> on_ack(const wire::Ack& ack, TimestampMs now) {
        return tracker::on_ack(state_, ack, config_, now);
    }
    wire::CommandReplyFrame on_command(const wire::CommandFrame& cmd, TimestampMs now) {
        return tracker::on_command(state_, config_, cmd, now);
    }
    std::vector<wire::SmsMessage> on_sms(const wire::SmsMessage& sms, TimestampMs now) {
        return tracker::on_sms(state_, config_, sms, now);
    }

    const TrackerConfig& config() const { return config_; }
    TrackerConfig& config() { return config_; }
    const TrackerState& state() const { return state_; }
    TrackerState& state() { return state_; }

private:
    TrackerConfig config_;
    TrackerState state_;
};

}  // namespace radfleet::tracker
