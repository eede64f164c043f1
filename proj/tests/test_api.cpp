#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <numbers>

#include "radfleet/api.hpp"
#include "radfleet/time.hpp"

using namespace radfleet;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kA = 356938035643809ULL;
constexpr std::uint64_t kB = 490154203237518ULL;
// 2024-01-10T06:00:00Z, 09:30 local at +03:30
constexpr TimestampMs kStart = 1'704'866'400'000LL;
constexpr double kLat0 = 35.7;
constexpr double kLon = 51.4;
constexpr double kStepM = 200.0;  // 72 km/h for 10 s
constexpr int kSamples = 61;

double step_deg() { return kStepM / 6'371'000.0 * 180.0 / std::numbers::pi; }

wire::TelemetryRecord sample(int i) {
    wire::RecordFields f;
    f.seq = static_cast<std::uint32_t>(i + 1);
    f.timestamp_ms = kStart + i * 10'000LL;
    f.fix_valid = true;
    f.ignition = true;
    f.lat = kLat0 + i * step_deg();
    f.lon = kLon;
    f.speed_kmh = 72;
    f.fuel_rate_lph = 6.0;
    f.odometer_m = 50'000 + i * kStepM;
    return *wire::make_record(f);
}

struct Fixture {
    fs::path dir;
    TimestampMs now = kStart + (kSamples - 1) * 10'000LL + 60'000;
    std::unique_ptr<server::IngestServer> srv;

    explicit Fixture(const std::string& tag, bool sms = true) {
        dir = fs::temp_directory_path() / ("radfleet_api_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        server::ServerConfig c;
        c.data_dir = dir;
        c.sms_enabled = sms;
        store::DeviceInfo a;
        a.imei = kA;
        a.label = "A";
        a.phone = "+981111";
        a.vehicle_class = "truck";
        store::DeviceInfo b;
        b.imei = kB;
        b.label = "B";
        c.registry_seed = {a, b};
        c.maintenance = {{"oil", std::nullopt, "truck", 10'000.0}};
        auto s = server::IngestServer::open(c, [this] { return now; });
        EXPECT_TRUE(s) << s.error();
        srv = std::move(*s);
        std::vector<wire::TelemetryRecord> recs;
        for (int i = 0; i < kSamples; ++i) recs.push_back(sample(i));
        EXPECT_TRUE(srv->ingest(kA, recs, store::Transport::Tcp));
    }
    ~Fixture() {
        srv.reset();
        fs::remove_all(dir);
    }

    api::Response get(const std::string& path, api::Params q = {}) {
        return api::handle(*srv, {"GET", path, std::move(q), ""});
    }
    api::Response post(const std::string& path, const json& body) {
        return api::handle(*srv, {"POST", path, {}, body.dump()});
    }
};

}  // namespace

TEST(Api, ParseTimeParam) {
    EXPECT_EQ(api::parse_time_param("1704067200000", 210), 1'704'067'200'000LL);
    EXPECT_EQ(api::parse_time_param("2024-01-01T00:00:00Z", 210), 1'704'067'200'000LL);
    // local midnight at +03:30 is 20:30 UTC the day before
    EXPECT_EQ(api::parse_time_param("2024-01-01", 210), 1'704'067'200'000LL - 210 * 60'000LL);
    EXPECT_FALSE(api::parse_time_param("yesterday", 210));
    EXPECT_FALSE(api::parse_time_param("", 210));
}

TEST(Api, VehiclesListShowsLatestAndStaleness) {
    Fixture f("veh");
    const auto r = f.get("/api/vehicles");
    ASSERT_EQ(r.status, 200);
    const auto j = json::parse(r.body);
    ASSERT_EQ(j.size(), 2u);
    for (const auto& v : j) {
        if (v["imei"] == kA) {
            EXPECT_EQ(v["position"]["seq"], kSamples);
            EXPECT_NEAR(v["age_s"].get<double>(), 60.0, 1e-9);
            EXPECT_FALSE(v["stale"].get<bool>());
        } else {
            EXPECT_TRUE(v["position"].is_null());
            EXPECT_TRUE(v["stale"].get<bool>());
        }
    }
    f.now += 901'000;
    const auto later = json::parse(f.get("/api/vehicles").body);
    for (const auto& v : later)
        if (v["imei"] == kA) EXPECT_TRUE(v["stale"].get<bool>());
}

TEST(Api, TrackWindowMatchesLinearFilter) {
    Fixture f("track");
    const TimestampMs from = kStart + 95'000, to = kStart + 305'000;
    std::size_t expect = 0;
    for (int i = 0; i < kSamples; ++i) {
        const auto t = sample(i).time();
        if (t >= from && t <= to) ++expect;
    }
    auto r = f.get("/api/vehicles/" + std::to_string(kA) + "/track",
                   {{"from", std::to_string(from)}, {"to", format_iso8601(to)}});
    ASSERT_EQ(r.status, 200);
    const auto j = json::parse(r.body);
    ASSERT_EQ(j["records"].size(), expect);
    EXPECT_EQ(j["records"][0]["timestamp_ms"], kStart + 100'000);

    EXPECT_EQ(f.get("/api/vehicles/123/track").status, 404);
    EXPECT_EQ(f.get("/api/vehicles/abc/track").status, 400);
    EXPECT_EQ(f.get("/api/vehicles/" + std::to_string(kA) + "/track", {{"from", "soon"}}).status, 400);
}

TEST(Api, DailyReportAgainstMeridianOracle) {
    Fixture f("daily");
    // Along a meridian the great-circle distance is R times the latitude delta.
    const double oracle_km = (kSamples - 1) * kStepM / 1000.0;
    const double oracle_l = (kSamples - 1) * 10.0 * 6.0 / 3600.0;
    const auto r = f.get("/api/reports/daily", {{"vehicle", std::to_string(kA)}, {"month", "2024-01"}});
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = json::parse(r.body);
    ASSERT_EQ(j["columns"], json({"date", "km", "liters"}));
    ASSERT_EQ(j["rows"].size(), 31u);
    for (const auto& row : j["rows"]) {
        if (row["date"] == "2024-01-10") {
            EXPECT_NEAR(row["km"].get<double>(), oracle_km, 0.002);
            EXPECT_NEAR(row["liters"].get<double>(), oracle_l, 0.01);
        } else {
            EXPECT_EQ(row["km"].get<double>(), 0.0);
        }
    }
    const auto csv = f.get("/api/reports/daily",
                           {{"vehicle", std::to_string(kA)}, {"month", "2024-01"}, {"format", "csv"}});
    EXPECT_EQ(csv.content_type.rfind("text/csv", 0), 0u);
    EXPECT_EQ(csv.body.rfind("date,km,liters\r\n2024-01-01,", 0), 0u);
}

TEST(Api, ReportParameterErrors) {
    Fixture f("errs");
    const auto v = std::to_string(kA);
    EXPECT_EQ(f.get("/api/reports/daily", {{"month", "2024-01"}}).status, 400);
    EXPECT_EQ(f.get("/api/reports/daily", {{"vehicle", "42"}, {"month", "2024-01"}}).status, 404);
    EXPECT_EQ(f.get("/api/reports/daily", {{"vehicle", v}, {"month", "2024-13"}}).status, 400);
    EXPECT_EQ(f.get("/api/reports/monthly", {{"vehicle", v}, {"from", "2024-03"}, {"to", "2024-01"}}).status, 400);
    EXPECT_EQ(f.get("/api/reports/bogus", {{"vehicle", v}}).status, 404);
    EXPECT_EQ(f.get("/api/reports/overspeed", {{"vehicle", v}, {"limit", "-1"}}).status, 400);
    EXPECT_EQ(f.get("/api/reports/mission", {{"id", "7"}}).status, 404);
    EXPECT_EQ(f.get("/api/nothing").status, 404);
    EXPECT_EQ(f.get("/other").status, 404);
    EXPECT_EQ(api::handle(*f.srv, {"PUT", "/api/vehicles", {}, ""}).status, 405);
    EXPECT_EQ(api::handle(*f.srv, {"POST", "/api/missions", {}, "{not json"}).status, 400);
}

TEST(Api, OtherReportKinds) {
    Fixture f("kinds");
    const auto v = std::to_string(kA);
    auto table = [&](const std::string& kind, api::Params q) {
        q["vehicle"] = v;
        const auto r = f.get("/api/reports/" + kind, q);
        EXPECT_EQ(r.status, 200) << kind << ": " << r.body;
        return json::parse(r.body);
    };
    EXPECT_EQ(table("monthly", {{"from", "2023-12"}, {"to", "2024-02"}})["rows"].size(), 3u);
    EXPECT_EQ(table("compare", {{"monthA", "2024-01"}, {"monthB", "2024-02"}})["rows"].size(), 31u);
    const auto trips = table("trips", {});
    ASSERT_EQ(trips["rows"].size(), 1u);
    EXPECT_NEAR(trips["rows"][0]["distance_km"].get<double>(), 12.0, 0.002);
    EXPECT_EQ(table("overspeed", {{"limit", "60"}})["rows"].size(), 1u);
    EXPECT_EQ(table("overspeed", {})["rows"].size(), 0u);  // default limit 90
    EXPECT_EQ(table("fuel-by-speed", {})["rows"].size(), 13u);

    // CAN odometer wins over GPS path length: 62 km of 10,000 km interval used.
    const auto m = table("maintenance", {});
    ASSERT_EQ(m["rows"].size(), 1u);
    EXPECT_NEAR(m["rows"][0]["km_remaining"].get<double>(), 10'000.0 - 62.0, 0.05);
}

TEST(Api, OdometerFallsBackToPath) {
    std::vector<wire::TelemetryRecord> recs;
    for (int i = 0; i < 11; ++i) {
        wire::RecordFields fl;
        fl.timestamp_ms = kStart + i * 10'000LL;
        fl.fix_valid = true;
        fl.lat = kLat0 + i * step_deg();
        fl.lon = kLon;
        recs.push_back(*wire::make_record(fl));
    }
    EXPECT_NEAR(api::odometer_km(recs), 2.0, 1e-4);
}

TEST(Api, NearestUsesGreatCircleDistance) {
    Fixture f("near");
    const double last_lat = kLat0 + (kSamples - 1) * step_deg();
    const double q_lat = last_lat + 0.01;
    const double oracle_m = 6'371'000.0 * 0.01 * std::numbers::pi / 180.0;
    const auto r = f.get("/api/nearest", {{"lat", std::to_string(q_lat)}, {"lon", std::to_string(kLon)}});
    ASSERT_EQ(r.status, 200);
    const auto j = json::parse(r.body);
    ASSERT_EQ(j["ranked"].size(), 1u);  // B never reported
    EXPECT_EQ(j["ranked"][0]["vehicle"], kA);
    EXPECT_NEAR(j["ranked"][0]["distance_m"].get<double>(), oracle_m, 0.5);
    EXPECT_EQ(f.get("/api/nearest", {{"lat", "91"}, {"lon", "0"}}).status, 400);
    EXPECT_EQ(f.get("/api/nearest", {{"lat", "1"}}).status, 400);
    EXPECT_EQ(json::parse(f.get("/api/nearest", {{"lat", "0"}, {"lon", "0"}, {"limit", "0"}}).body)["ranked"].size(),
              0u);
}

TEST(Api, MissionsLifecycle) {
    Fixture f("missions");
    const json m{{"vehicle", kA},
                 {"driver", "Sara"},
                 {"purpose", "delivery"},
                 {"start", format_iso8601(kStart)},
                 {"end", kStart + 3'600'000}};
    const auto created = f.post("/api/missions", m);
    ASSERT_EQ(created.status, 201) << created.body;
    const auto cj = json::parse(created.body);
    EXPECT_EQ(cj["id"], 1);
    EXPECT_NEAR(cj["mileage_km"].get<double>(), 12.0, 0.002);
    EXPECT_EQ(cj["trips"], 1);

    EXPECT_EQ(f.post("/api/missions", m).status, 409);
    auto bad = m;
    bad["end"] = kStart;
    bad["start"] = kStart + 10 * 3'600'000LL;
    EXPECT_EQ(f.post("/api/missions", bad).status, 400);
    auto unknown = m;
    unknown["vehicle"] = 42;
    EXPECT_EQ(f.post("/api/missions", unknown).status, 404);

    const auto list = json::parse(f.get("/api/missions").body);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0]["driver"], "Sara");
    const auto rep = f.get("/api/reports/mission", {{"id", "1"}});
    ASSERT_EQ(rep.status, 200);
    EXPECT_EQ(json::parse(rep.body)["rows"][0]["mission"], 1);
}

TEST(Api, CommandsOverSmsAndNoRoute) {
    {
        Fixture f("cmd_sms");
        const auto r = f.post("/api/commands", {{"vehicle", kA}, {"command", "GETGPS"}});
        ASSERT_EQ(r.status, 202) << r.body;
        const auto t = json::parse(r.body);
        EXPECT_EQ(t["channel"], "sms");
        EXPECT_EQ(t["state"], "Delivered");
        const auto one = f.get("/api/commands/" + std::to_string(t["id"].get<int>()));
        EXPECT_EQ(one.status, 200);
        EXPECT_EQ(f.get("/api/commands/999").status, 404);
        EXPECT_EQ(json::parse(f.get("/api/commands", {{"vehicle", std::to_string(kA)}}).body).size(), 1u);
        EXPECT_EQ(json::parse(f.get("/api/commands", {{"vehicle", std::to_string(kB)}}).body).size(), 0u);
        EXPECT_EQ(f.post("/api/commands", {{"vehicle", kA}, {"command", "REBOOT"}}).status, 400);
        EXPECT_EQ(f.post("/api/commands", {{"vehicle", 42}, {"command", "GETGPS"}}).status, 404);
        EXPECT_EQ(f.post("/api/commands", {{"vehicle", kA}}).status, 400);
    }
    {
        Fixture f("cmd_noroute", false);
        EXPECT_EQ(f.post("/api/commands", {{"vehicle", std::to_string(kA)}, {"command", "OUT 1 1"}}).status, 503);
    }
}

TEST(Api, AlertsAndStats) {
    Fixture f("alerts");
    wire::RecordFields fl;
    fl.seq = 100;
    fl.timestamp_ms = kStart + 700'000;
    fl.fix_valid = true;
    fl.lat = kLat0;
    fl.lon = kLon;
    fl.event = wire::EventCode::Panic;
    const std::vector<wire::TelemetryRecord> one{*wire::make_record(fl)};
    ASSERT_TRUE(f.srv->ingest(kA, one, store::Transport::Tcp));
    const auto all = json::parse(f.get("/api/alerts").body);
    ASSERT_EQ(all.size(), 1u);
    const auto none = json::parse(f.get("/api/alerts", {{"since", std::to_string(f.now + 1)}}).body);
    EXPECT_EQ(none.size(), 0u);
    const auto stats = json::parse(f.get("/api/stats").body);
    EXPECT_EQ(stats["stored_records"], kSamples + 1);
}
