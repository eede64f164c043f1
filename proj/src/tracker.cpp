#include "radfleet/tracker.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace radfleet::tracker {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
    s = trim(s);
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

double accel_deviation_mg(const Accel& a) {
    return std::abs(std::sqrt(a.x_mg * a.x_mg + a.y_mg * a.y_mg + a.z_mg * a.z_mg) - 1000.0);
}

std::int64_t current_ma(PowerMode m) {
    switch (m) {
        case PowerMode::Active:
        case PowerMode::Idle: return static_cast<std::int64_t>(kActiveCurrentMa);
        case PowerMode::NormalSleep: return static_cast<std::int64_t>(kNormalSleepCurrentMa);
        case PowerMode::DeepSleep: return static_cast<std::int64_t>(kDeepSleepCurrentMa);
    }
    return 0;
}

TimestampMs seconds_to_ms(double s) { return static_cast<TimestampMs>(std::llround(s * 1000.0)); }

bool sustained(std::optional<TimestampMs>& since, bool condition, TimestampMs now, double sustain_s) {
    if (!condition) {
        since.reset();
        return false;
    }
    if (!since) since = now;
    return now - *since >= seconds_to_ms(sustain_s);
}

}  // namespace

// ---- config -----------------------------------------------------------------

Expected<geo::GeofenceZone, std::string> parse_zone_spec(std::string_view spec) {
    const auto w = words(spec);
    if (w.size() < 2) return fail(std::string("zone needs an id and a shape"));
    const auto id = parse_u64(w[0]);
    if (!id || *id == 0 || *id > 0xFFFF) return fail(std::string("zone id must be 1..65535"));
    std::vector<double> nums;
    for (std::size_t i = 2; i < w.size(); ++i) {
        const auto v = parse_double(w[i]);
        if (!v) return fail("bad number '" + std::string(w[i]) + "'");
        nums.push_back(*v);
    }
    geo::Shape shape;
    if (w[1] == "circle" && nums.size() == 3) {
        shape = geo::Circle{{nums[0], nums[1]}, nums[2]};
    } else if (w[1] == "rect" && nums.size() == 4) {
        shape = geo::Rectangle{{nums[0], nums[1]}, {nums[2], nums[3]}};
    } else if (w[1] == "tri" && nums.size() == 6) {
        shape = geo::Triangle{{nums[0], nums[1]}, {nums[2], nums[3]}, {nums[4], nums[5]}};
    } else {
        return fail("unknown shape or wrong arity: '" + std::string(w[1]) + "'");
    }
    auto z = geo::GeofenceZone::make(static_cast<std::uint32_t>(*id), shape);
    if (!z) return fail(std::string(geo::to_string(z.error())));
    return *z;
}

std::string_view to_string(ParamError e) {
    switch (e) {
        case ParamError::UnknownParam: return "UnknownParam";
        case ParamError::BadValue: return "BadValue";
    }
    return "?";
}

Expected<Ok, ParamError> set_param(TrackerConfig& c, std::string_view key, std::string_view value) {
    value = trim(value);
    struct Num {
        std::string_view key;
        double* field;
        double lo, hi;
    };
    const Num nums[] = {
        {"time_trigger_moving", &c.time_trigger_moving_s, 1, 86400},
        {"time_trigger_stationary", &c.time_trigger_stationary_s, 1, 86400},
        {"distance_trigger", &c.distance_trigger_m, 1, 1e6},
        {"angle_trigger", &c.angle_trigger_deg, 0.1, 180},
        {"moving_speed", &c.moving_speed_kmh, 0, 50},
        {"speed_limit", &c.speed_limit_kmh, 1, 400},
        {"overspeed_sustain", &c.overspeed_sustain_s, 0, 3600},
        {"overspeed_hysteresis", &c.overspeed_hysteresis_kmh, 0, 100},
        {"towing_distance", &c.towing_distance_m, 1, 1e5},
        {"towing_accel", &c.towing_accel_mg, 1, 16000},
        {"towing_sustain", &c.towing_sustain_s, 0, 3600},
        {"motion_threshold", &c.motion_threshold_mg, 1, 16000},
        {"harsh_accel", &c.eco.harsh_accel_mps2, 0.1, 50},
        {"harsh_brake", &c.eco.harsh_brake_mps2, -50, -0.1},
        {"harsh_corner", &c.eco.harsh_corner_mps2, 0.1, 50},
        {"eco_sustain", &c.eco.sustain_s, 0, 60},
        {"t_normal", &c.t_normal_s, 1, 1e7},
        {"t_deep", &c.t_deep_s, 1, 1e7},
        {"flush_interval", &c.flush_interval_s, 1, 86400},
        {"retransmit_timeout", &c.retransmit_timeout_s, 0.1, 3600},
    };
    for (const auto& n : nums) {
        if (key != n.key) continue;
        const auto v = parse_double(value);
        if (!v || *v < n.lo || *v > n.hi) return fail(ParamError::BadValue);
        *n.field = *v;
        return Ok{};
    }
    if (key == "max_send_attempts") {
        const auto v = parse_u64(value);
        if (!v || *v < 1 || *v > 100) return fail(ParamError::BadValue);
        c.max_send_attempts = static_cast<int>(*v);
    } else if (key == "server_host") {
        if (value.empty()) return fail(ParamError::BadValue);
        c.server_host = std::string(value);
    } else if (key == "server_port") {
        const auto v = parse_u64(value);
        if (!v || *v < 1 || *v > 65535) return fail(ParamError::BadValue);
        c.server_port = static_cast<std::uint16_t>(*v);
    } else if (key == "transport") {
        if (value == "tcp" || value == "TCP") c.transport = Transport::Tcp;
        else if (value == "udp" || value == "UDP") c.transport = Transport::Udp;
        else return fail(ParamError::BadValue);
    } else if (key == "sms_gateway") {
        if (value.empty()) return fail(ParamError::BadValue);
        c.sms_gateway = std::string(value);
    } else {
        return fail(ParamError::UnknownParam);
    }
    return Ok{};
}

Expected<TrackerConfig, ConfigError> parse_config(std::string_view text) {
    TrackerConfig c;
    int line_no = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) return fail(ConfigError{line_no, "expected key = value"});
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        auto err = [&](std::string msg) { return fail(ConfigError{line_no, std::move(msg)}); };

        if (key == "imei") {
            const auto v = parse_u64(value);
            if (!v || *v > wire::kMaxImei) return err("imei must be at most 15 digits");
            c.imei = *v;
        } else if (key == "zone") {
            if (c.zones.size() >= geo::kMaxZones) return err("more than 150 zones");
            auto z = parse_zone_spec(value);
            if (!z) return err("zone: " + z.error());
            for (const auto& existing : c.zones)
                if (existing.id() == z->id()) return err("duplicate zone id");
            c.zones.push_back(*z);
        } else if (key == "authorized_key") {
            if (c.authorized_keys.size() >= kMaxAuthorizedKeys) return err("more than 50 authorized keys");
            const auto v = parse_u64(value);
            if (!v) return err("bad key id");
            c.authorized_keys.push_back(*v);
        } else if (key == "authorized_number") {
            if (c.authorized_numbers.size() >= kMaxAuthorizedNumbers) return err("more than 8 authorized numbers");
            if (value.empty()) return err("empty phone number");
            c.authorized_numbers.emplace_back(value);
        } else if (key == "buffer_capacity") {
            const auto v = parse_u64(value);
            if (!v || *v < wire::kRecordSize || *v > kFlashCapacityBytes) return err("buffer_capacity out of range");
            c.buffer_capacity_bytes = static_cast<std::size_t>(*v);
        } else if (auto r = set_param(c, key, value); !r) {
            return err(std::string(to_string(r.error())) + " '" + std::string(key) + "'");
        }
    }
    return c;
}

// ---- state ------------------------------------------------------------------

std::string_view to_string(PowerMode m) {
    switch (m) {
        case PowerMode::Active: return "Active";
        case PowerMode::Idle: return "Idle";
        case PowerMode::NormalSleep: return "NormalSleep";
        case PowerMode::DeepSleep: return "DeepSleep";
    }
    return "?";
}

double TrackerState::battery_mv() const {
    // Li-Pol single cell, linear between 3.3 V empty and 4.2 V full.
    return 3300.0 + 900.0 * static_cast<double>(battery_charge) / static_cast<double>(full_charge());
}

// ---- power ------------------------------------------------------------------

bool power_tick(TrackerState& s, const SensorFrame& frame, const TrackerConfig& config, double dt_s) {
    const auto dt_ms = static_cast<std::int64_t>(std::llround(dt_s * 1000.0));
    const bool external_ok = frame.external_power_v >= kMinExternalVolts;
    if (external_ok) {
        s.battery_charge = std::min(TrackerState::full_charge(),
                                    s.battery_charge + static_cast<std::int64_t>(kChargeCurrentMa) * dt_ms);
    } else {
        s.battery_charge = std::max<std::int64_t>(0, s.battery_charge - current_ma(s.power_mode) * dt_ms);
    }

    const bool moving = s.last_fix && gps_powered(s.power_mode) && s.last_fix->speed_kmh >= config.moving_speed_kmh;
    const bool activity = frame.ignition || frame.panic_button ||
                          accel_deviation_mg(frame.accel) > config.motion_threshold_mg || moving;
    if (activity) {
        s.last_activity = frame.tick_time;
        if (!gps_powered(s.power_mode)) s.power_mode = PowerMode::Active;
    } else {
        const TimestampMs quiet = frame.tick_time - s.last_activity;
        if (quiet >= seconds_to_ms(config.t_deep_s)) s.power_mode = PowerMode::DeepSleep;
        else if (quiet >= seconds_to_ms(config.t_normal_s) && s.power_mode != PowerMode::DeepSleep)
            s.power_mode = PowerMode::NormalSleep;
    }

    const bool cutoff = s.detectors.initialized && s.detectors.prev_external_ok && !external_ok;
    s.detectors.prev_external_ok = external_ok;
    return cutoff;
}

// ---- acquisition --------------------------------------------------------------

AcquisitionTrigger evaluate_acquisition(const TrackerState& s, const nmea::Fix& fix, const TrackerConfig& config) {
    if (!s.last_sent_fix || !s.last_record_time) return AcquisitionTrigger::Periodic;
    const bool moving = fix.speed_kmh >= config.moving_speed_kmh;
    const bool idle = s.power_mode == PowerMode::Idle;

    if (moving && !idle &&
        geo::heading_difference(s.last_sent_fix->heading_deg, fix.heading_deg) >= config.angle_trigger_deg)
        return AcquisitionTrigger::AngleTrig;
    if (!idle && geo::haversine_distance({s.last_sent_fix->lat, s.last_sent_fix->lon}, {fix.lat, fix.lon}) >=
                     config.distance_trigger_m)
        return AcquisitionTrigger::DistanceTrig;
    const double period = moving ? config.time_trigger_moving_s : config.time_trigger_stationary_s;
    if (fix.timestamp_ms - *s.last_record_time >= seconds_to_ms(period)) return AcquisitionTrigger::Periodic;
    return AcquisitionTrigger::None;
}

// ---- events -------------------------------------------------------------------

std::vector<DetectedEvent> detect_events(TrackerState& s, const SensorFrame& frame,
                                         const std::optional<nmea::Fix>& fix, const TrackerConfig& config) {
    using wire::EventCode;
    std::vector<DetectedEvent> out;
    auto& d = s.detectors;
    const TimestampMs now = frame.tick_time;
    const std::uint8_t din = frame.digital_in & 0x0F;

    if (!d.initialized) {
        d.initialized = true;
        d.prev_ignition = frame.ignition;
        d.prev_panic = frame.panic_button;
        d.prev_jammed = frame.gsm_jammed;
        d.prev_digital_in = din;
    }

    // Edges.
    if (frame.ignition && !d.prev_ignition) {
        out.push_back({EventCode::IgnitionOn});
        const bool keyed = frame.driver_key && std::find(config.authorized_keys.begin(), config.authorized_keys.end(),
                                                         *frame.driver_key) != config.authorized_keys.end();
        s.authorized = config.authorized_keys.empty() || keyed;
        if (!s.authorized) out.push_back({EventCode::UnauthorizedDriver});
    }
    if (!frame.ignition && d.prev_ignition) out.push_back({EventCode::IgnitionOff});
    if (frame.panic_button && !d.prev_panic) out.push_back({EventCode::Panic});
    if (frame.gsm_jammed && !d.prev_jammed) out.push_back({EventCode::JammingDetected});
    if (din != d.prev_digital_in) out.push_back({EventCode::IoChange});

    if (frame.ignition != d.prev_ignition) {
        d.park_anchor.reset();
        d.tow_accel_since.reset();
        d.tow_reported = false;
    }
    d.prev_ignition = frame.ignition;
    d.prev_panic = frame.panic_button;
    d.prev_jammed = frame.gsm_jammed;
    d.prev_digital_in = din;

    // Overspeed with hysteresis; only a fresh fix moves this detector.
    if (fix) {
        const double v = fix->speed_kmh;
        if (v < config.speed_limit_kmh - config.overspeed_hysteresis_kmh) {
            d.overspeed_active = false;
            d.overspeed_since.reset();
        } else if (sustained(d.overspeed_since, v > config.speed_limit_kmh, now, config.overspeed_sustain_s) &&
                   !d.overspeed_active) {
            d.overspeed_active = true;
            out.push_back({EventCode::Overspeed});
        }
    }

    // Towing: parked and either displaced or shaken.
    if (!frame.ignition) {
        bool towed = false;
        if (fix) {
            const geo::GeoPoint here{fix->lat, fix->lon};
            if (!d.park_anchor) d.park_anchor = s.last_fix ? geo::GeoPoint{s.last_fix->lat, s.last_fix->lon} : here;
            towed = geo::haversine_distance(*d.park_anchor, here) > config.towing_distance_m;
        }
        if (sustained(d.tow_accel_since, accel_deviation_mg(frame.accel) > config.towing_accel_mg, now,
                      config.towing_sustain_s))
            towed = true;
        if (towed && !d.tow_reported) {
            d.tow_reported = true;
            out.push_back({EventCode::Towing});
        }
    }

    // Eco driving.
    const double ax = frame.accel.x_mg * kStandardGravityMps2 / 1000.0;
    const double ay = frame.accel.y_mg * kStandardGravityMps2 / 1000.0;
    auto eco = [&](std::optional<TimestampMs>& since, bool& active, bool cond, EventCode code) {
        const bool hit = sustained(since, cond, now, config.eco.sustain_s);
        if (!cond) active = false;
        if (hit && !active) {
            active = true;
            out.push_back({code});
        }
    };
    eco(d.harsh_accel_since, d.harsh_accel_active, ax >= config.eco.harsh_accel_mps2, EventCode::HarshAccel);
    eco(d.harsh_brake_since, d.harsh_brake_active, ax <= config.eco.harsh_brake_mps2, EventCode::HarshBrake);
    eco(d.harsh_corner_since, d.harsh_corner_active, std::abs(ay) >= config.eco.harsh_corner_mps2,
        EventCode::HarshCorner);

    // Geofences, relative to the previous valid fix.
    if (fix && !config.zones.empty()) {
        const geo::GeoPoint here{fix->lat, fix->lon};
        std::optional<geo::GeoPoint> prev;
        if (d.zone_baseline && s.last_fix) prev = geo::GeoPoint{s.last_fix->lat, s.last_fix->lon};
        const auto events = geo::zone_transitions(prev, here, config.zones);
        if (events) {
            for (const auto& e : *events) {
                out.push_back({e.transition == geo::Transition::Enter ? EventCode::GeofenceEnter
                                                                      : EventCode::GeofenceExit,
                               e.zone_id});
            }
        }
        s.zone_membership.clear();
        for (const auto& z : config.zones)
            if (z.contains(here)) s.zone_membership.insert(z.id());
        d.zone_baseline = true;
    }
    return out;
}

// ---- link -----------------------------------------------------------------------

namespace {

DataFrame send_next(TrackerState& s, const TrackerConfig& config, TimestampMs now) {
    auto& l = s.link;
    DataFrame out;
    if (config.transport == Transport::Tcp && !l.session_open) {
        l.pending = LinkState::Pending::Login;
        l.in_flight = *wire::encode_frame(config.imei, {});
        l.in_flight_seqs.clear();
        out.login = true;
    } else {
        const auto batch = s.buffer.peek(wire::kMaxRecordsPerFrame);
        l.pending = LinkState::Pending::Data;
        l.in_flight = *wire::encode_frame(config.imei, batch);
        l.in_flight_seqs.clear();
        for (const auto& r : batch) l.in_flight_seqs.push_back(r.seq);
        out.record_count = batch.size();
    }
    l.attempts = 1;
    l.last_send = now;
    l.last_flush = now;
    out.bytes = l.in_flight;
    return out;
}

void drop_link(LinkState& l) {
    l.session_open = false;
    l.pending = LinkState::Pending::None;
    l.in_flight.clear();
    l.in_flight_seqs.clear();
    l.attempts = 0;
}

wire::TelemetryRecord build_record(const TrackerState& s, const SensorFrame& frame,
                                   const std::optional<nmea::Fix>& fix, wire::EventCode code, std::uint16_t zone_id,
                                   bool link_up) {
    wire::RecordFields f;
    f.timestamp_ms = frame.tick_time;
    f.priority = wire::is_alert(code);
    f.buffered_replay = !link_up;
    f.fix_valid = fix.has_value();
    f.ignition = frame.ignition;
    const nmea::Fix* pos = fix ? &*fix : (s.last_fix ? &*s.last_fix : nullptr);
    if (pos) {
        f.lat = pos->lat;
        f.lon = pos->lon;
        f.altitude_m = std::clamp(pos->altitude_m, -32768.0, 32767.0);
        f.heading_deg = pos->heading_deg;
        f.speed_kmh = fix ? std::clamp(pos->speed_kmh, 0.0, 6553.5) : 0.0;
        f.satellites = fix ? std::clamp(pos->satellites, 0, 255) : 0;
        f.hdop = fix ? std::clamp(pos->hdop, 0.0, 25.5) : 0.0;
    }
    f.event = code;
    f.digital_in = frame.digital_in & 0x0F;
    f.digital_out = s.outputs & 0x0F;
    f.analog1_mv = std::clamp(frame.analog_mv[0], 0.0, 32000.0);
    f.analog2_mv = std::clamp(frame.analog_mv[1], 0.0, 32000.0);
    f.fuel_level_pct = std::clamp(frame.fuel_level_pct, 0.0, 100.0);
    f.fuel_rate_lph = std::clamp(frame.fuel_rate_lph, 0.0, 6553.5);
    f.odometer_m = std::clamp(frame.can_odometer_m.value_or(s.odometer_m), 0.0, 4294967295.0);
    f.battery_mv = s.battery_mv();
    f.accel_x_mg = std::clamp(frame.accel.x_mg, -32768.0, 32767.0);
    f.accel_y_mg = std::clamp(frame.accel.y_mg, -32768.0, 32767.0);
    f.accel_z_mg = std::clamp(frame.accel.z_mg, -32768.0, 32767.0);
    f.geofence_id = zone_id;
    f.seq = s.next_seq;
    return *wire::make_record(f);
}

std::optional<nmea::Fix> read_gps(const std::vector<std::string>& lines) {
    std::vector<nmea::Sentence> sentences;
    for (const auto& line : lines) {
        auto sentence = nmea::parse_sentence(line);
        if (sentence) sentences.push_back(std::move(*sentence));
    }
    if (sentences.empty()) return std::nullopt;
    auto fix = nmea::fuse_fix(sentences);
    if (!fix || !fix->valid) return std::nullopt;
    return *fix;
}

}  // namespace

Expected<StepOutput, StepError> step(TrackerState& s, const SensorFrame& frame, const TrackerConfig& config) {
    if (s.last_tick && frame.tick_time <= *s.last_tick) return fail(StepError::ClockRegression);
    const double dt_s = s.last_tick ? static_cast<double>(frame.tick_time - *s.last_tick) / 1000.0 : 1.0;
    if (!s.last_tick) s.last_activity = frame.tick_time;
    s.last_tick = frame.tick_time;

    StepOutput out;
    const bool cutoff = power_tick(s, frame, config, dt_s);
    const bool powered = s.battery_charge > 0 || frame.external_power_v >= kMinExternalVolts;
    if (!powered) {
        drop_link(s.link);
        return out;
    }

    std::optional<nmea::Fix> fix;
    if (gps_powered(s.power_mode)) {
        fix = read_gps(frame.nmea_lines);
        if (fix) {
            ++s.gps_epochs_consumed;
            if (s.last_fix)
                s.odometer_m += geo::haversine_distance({s.last_fix->lat, s.last_fix->lon}, {fix->lat, fix->lon});
            s.power_mode = frame.ignition && fix->speed_kmh < config.moving_speed_kmh ? PowerMode::Idle
                                                                                      : PowerMode::Active;
        }
    }

    const bool link_up = frame.gsm_available && modem_powered(s.power_mode);
    std::vector<DetectedEvent> events;
    if (const auto trig = fix ? evaluate_acquisition(s, *fix, config) : AcquisitionTrigger::None;
        trig != AcquisitionTrigger::None) {
        const wire::EventCode code = trig == AcquisitionTrigger::AngleTrig      ? wire::EventCode::AngleTrig
                                     : trig == AcquisitionTrigger::DistanceTrig ? wire::EventCode::DistanceTrig
                                                                                : wire::EventCode::Periodic;
        events.push_back({code});
    }
    for (const auto& e : detect_events(s, frame, fix, config)) events.push_back(e);
    if (cutoff) events.push_back({wire::EventCode::PowerCutoff});
    if (fix) s.last_fix = fix;

    bool priority = false;
    for (const auto& e : events) {
        auto r = build_record(s, frame, fix, e.code, e.zone_id, link_up);
        ++s.next_seq;
        ++s.records_produced;
        s.buffer.push(r);
        priority = priority || r.priority();
        out.records.push_back(r);
        if (e.code == wire::EventCode::Panic && frame.gsm_available && modem_powered(s.power_mode))
            out.outbound.push_back(wire::SmsMessage{config.sms_gateway, wire::format_position_sms(config.imei, r)});
    }
    if (!events.empty()) {
        s.last_record_time = frame.tick_time;
        if (fix) s.last_sent_fix = fix;
    }

    if (!link_up) {
        drop_link(s.link);
        return out;
    }

    auto& l = s.link;
    const TimestampMs now = frame.tick_time;
    if (l.pending != LinkState::Pending::None) {
        if (now - l.last_send >= seconds_to_ms(config.retransmit_timeout_s)) {
            if (l.attempts < config.max_send_attempts) {
                ++l.attempts;
                l.last_send = now;
                out.outbound.push_back(DataFrame{l.in_flight, l.pending == LinkState::Pending::Login,
                                                 l.in_flight_seqs.size(), true});
            } else {
                // Give up until the next flush cadence.
                drop_link(l);
                l.last_flush = now;
            }
        }
    } else if (!s.buffer.empty()) {
        const bool due = priority || !l.last_flush || now - *l.last_flush >= seconds_to_ms(config.flush_interval_s);
        if (due) out.outbound.push_back(send_next(s, config, now));
    }
    return out;
}

std::vector<Outbound> on_ack(TrackerState& s, const wire::Ack& ack, const TrackerConfig& config, TimestampMs now) {
    auto& l = s.link;
    std::vector<Outbound> out;
    switch (l.pending) {
        case LinkState::Pending::None:
            return out;
        case LinkState::Pending::Login:
            l.pending = LinkState::Pending::None;
            l.attempts = 0;
            l.in_flight.clear();
            if (ack.accepted_count == 0) {
                l.session_open = false;
                return out;
            }
            l.session_open = true;
            break;
        case LinkState::Pending::Data: {
            const std::size_t n = std::min<std::size_t>(ack.accepted_count, l.in_flight_seqs.size());
            s.records_acked += s.buffer.acknowledge(std::span(l.in_flight_seqs).first(n));
            l.pending = LinkState::Pending::None;
            l.attempts = 0;
            l.in_flight.clear();
            l.in_flight_seqs.clear();
            if (n == 0) return out;
            break;
        }
    }
    if (!s.buffer.empty()) out.push_back(send_next(s, config, now));
    return out;
}

// ---- commands -------------------------------------------------------------------

std::string_view to_string(CommandStatus st) {
    switch (st) {
        case CommandStatus::Ok: return "Ok";
        case CommandStatus::UnknownParam: return "UnknownParam";
        case CommandStatus::BadValue: return "BadValue";
        case CommandStatus::Unauthorized: return "Unauthorized";
        case CommandStatus::NoFix: return "NoFix";
        case CommandStatus::Rejected: return "Rejected";
    }
    return "?";
}

CommandResult handle_command(TrackerState& s, TrackerConfig& config, const wire::Command& cmd,
                             const CommandOrigin& origin, TimestampMs now) {
    const auto* sms = std::get_if<SmsOrigin>(&origin);
    const std::string origin_text = sms ? "sms:" + sms->phone : "session";
    CommandResult result;

    if (sms && std::find(config.authorized_numbers.begin(), config.authorized_numbers.end(), sms->phone) ==
                   config.authorized_numbers.end()) {
        result.status = CommandStatus::Unauthorized;
    } else if (std::holds_alternative<wire::GetGps>(cmd)) {
        if (!s.last_fix) {
            result.status = CommandStatus::NoFix;
            result.reply = "ERR NoFix";
        } else {
            wire::RecordFields f;
            f.timestamp_ms = s.last_fix->timestamp_ms;
            f.lat = s.last_fix->lat;
            f.lon = s.last_fix->lon;
            f.speed_kmh = std::clamp(s.last_fix->speed_kmh, 0.0, 6553.5);
            f.heading_deg = s.last_fix->heading_deg;
            result.reply = wire::format_position_sms(config.imei, *wire::make_record(f));
        }
    } else if (const auto* p = std::get_if<wire::SetParam>(&cmd)) {
        if (auto r = set_param(config, p->key, p->value); !r) {
            result.status = r.error() == ParamError::UnknownParam ? CommandStatus::UnknownParam
                                                                  : CommandStatus::BadValue;
            result.reply = "ERR " + std::string(to_string(r.error()));
        } else {
            result.reply = "OK " + p->key + "=" + p->value;
        }
    } else if (const auto* o = std::get_if<wire::SetOutput>(&cmd)) {
        const auto mask = static_cast<std::uint8_t>(1u << o->bit);
        s.outputs = static_cast<std::uint8_t>(o->on ? (s.outputs | mask) : (s.outputs & ~mask)) & 0x0F;
        result.reply = "OK " + wire::format_command(cmd);
    }

    s.audit.push_back({now, origin_text, wire::format_command(cmd), std::string(to_string(result.status))});
    return result;
}

wire::CommandReplyFrame on_command(TrackerState& s, TrackerConfig& config, const wire::CommandFrame& cmd,
                                   TimestampMs now) {
    wire::CommandReplyFrame reply{cmd.command_id, 0, {}};
    const auto parsed = wire::parse_command(cmd.text);
    if (!parsed) {
        s.audit.push_back({now, "session", cmd.text, "Rejected"});
        reply.status = static_cast<std::uint8_t>(CommandStatus::Rejected);
        reply.text = "ERR " + std::string(wire::to_string(parsed.error()));
        return reply;
    }
    const auto r = handle_command(s, config, *parsed, SessionOrigin{}, now);
    reply.status = static_cast<std::uint8_t>(r.status);
    reply.text = r.reply;
    return reply;
}

std::vector<wire::SmsMessage> on_sms(TrackerState& s, TrackerConfig& config, const wire::SmsMessage& sms,
                                     TimestampMs now) {
    const auto parsed = wire::parse_sms_command(sms.text, sms.peer);
    if (!parsed) {
        s.audit.push_back({now, "sms:" + sms.peer, sms.text.substr(0, wire::kSmsMaxLength), "Rejected"});
        return {};
    }
    const auto r = handle_command(s, config, parsed->command, SmsOrigin{sms.peer}, now);
    if (r.reply.empty()) return {};
    return {wire::SmsMessage{sms.peer, r.reply}};
}

}  // namespace radfleet::tracker
