#include <gtest/gtest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "radfleet/server.hpp"

using namespace radfleet;
using namespace radfleet::server;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kA = 356938035643809ULL;
constexpr std::uint64_t kB = 490154203237518ULL;
constexpr TimestampMs kT0 = 1'704'067'200'000LL;

wire::TelemetryRecord rec(std::uint32_t seq, TimestampMs t, wire::EventCode ev = wire::EventCode::Periodic,
                          bool fix = true) {
    wire::RecordFields f;
    f.seq = seq;
    f.timestamp_ms = t;
    f.fix_valid = fix;
    f.lat = 35.7 + seq * 1e-4;
    f.lon = 51.4;
    f.speed_kmh = 30;
    f.event = ev;
    return *wire::make_record(f);
}

struct Fixture {
    fs::path dir;
    TimestampMs now = kT0 + 3'600'000;
    std::unique_ptr<IngestServer> srv;

    explicit Fixture(const std::string& tag, bool sms = true) {
        dir = fs::temp_directory_path() / ("radfleet_srv_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        reopen(sms);
    }
    ~Fixture() {
        srv.reset();
        fs::remove_all(dir);
    }
    void reopen(bool sms = true) {
        srv.reset();
        ServerConfig c;
        c.data_dir = dir;
        c.sms_enabled = sms;
        c.stream_backlog = 5;
        store::DeviceInfo a;
        a.imei = kA;
        a.label = "A";
        a.phone = "+981111";
        store::DeviceInfo b;
        b.imei = kB;
        b.label = "B";
        b.enabled = false;
        c.registry_seed = {a, b};
        auto s = IngestServer::open(c, [this] { return now; });
        ASSERT_TRUE(s) << s.error();
        srv = std::move(*s);
    }
};

}  // namespace

TEST(Server, Authenticate) {
    Fixture f("auth");
    EXPECT_TRUE(f.srv->authenticate(kA));
    EXPECT_FALSE(f.srv->authenticate(kB));
    EXPECT_FALSE(f.srv->authenticate(123456789012345ULL));
    EXPECT_EQ(f.srv->stats().rejected_logins, 2u);
    const std::vector<wire::TelemetryRecord> one{rec(1, kT0)};
    EXPECT_EQ(f.srv->ingest(kB, one, store::Transport::Tcp).error(), IngestError::Unauthorized);
    ASSERT_TRUE(f.srv->set_enabled(kB, true));
    EXPECT_TRUE(f.srv->authenticate(kB));
}

TEST(Server, IngestDedupAndLatest) {
    Fixture f("ingest");
    std::vector<wire::TelemetryRecord> frame;
    for (std::uint32_t s = 11; s <= 20; ++s) frame.push_back(rec(s, kT0 + s * 60'000));
    EXPECT_EQ(f.srv->ingest(kA, frame, store::Transport::Tcp)->accepted_count, 10);
    EXPECT_EQ(f.srv->stats().stored_records, 10u);
    EXPECT_EQ(f.srv->ingest(kA, frame, store::Transport::Tcp)->accepted_count, 10);
    EXPECT_EQ(f.srv->stats().stored_records, 10u);
    EXPECT_EQ(f.srv->stats().duplicates, 10u);

    // Older buffered records arrive after live ones.
    std::vector<wire::TelemetryRecord> old;
    for (std::uint32_t s = 1; s <= 10; ++s) old.push_back(rec(s, kT0 + s * 60'000));
    ASSERT_TRUE(f.srv->ingest(kA, old, store::Transport::Udp));
    // An invalid fix with a later time does not move the marker.
    const std::vector<wire::TelemetryRecord> nofix{rec(21, kT0 + 30 * 60'000, wire::EventCode::IoChange, false)};
    ASSERT_TRUE(f.srv->ingest(kA, nofix, store::Transport::Tcp));

    const auto latest = f.srv->latest_positions();
    ASSERT_EQ(latest.size(), 1u);  // B is disabled
    ASSERT_TRUE(latest[0].record);
    EXPECT_EQ(latest[0].record->seq, 20u);
    EXPECT_DOUBLE_EQ(latest[0].age_s, (f.now - (kT0 + 20 * 60'000)) / 1000.0);
}

TEST(Server, QueryTrackMatchesLinearScan) {
    Fixture f("track");
    std::mt19937 rng(9);
    std::vector<wire::TelemetryRecord> all;
    for (std::uint32_t s = 1; s <= 300; ++s) all.push_back(rec(s, kT0 + static_cast<TimestampMs>(rng() % 86'400) * 1000));
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t i = 0; i < all.size(); i += 7)
        ASSERT_TRUE(f.srv->ingest(kA, std::span(all).subspan(i, std::min<std::size_t>(7, all.size() - i)),
                                  store::Transport::Tcp));
    for (int q = 0; q < 50; ++q) {
        TimestampMs a = kT0 + static_cast<TimestampMs>(rng() % 90'000) * 1000;
        TimestampMs b = kT0 + static_cast<TimestampMs>(rng() % 90'000) * 1000;
        if (a > b) std::swap(a, b);
        std::vector<wire::TelemetryRecord> oracle;
        for (const auto& r : all)
            if (r.time() >= a && r.time() < b) oracle.push_back(r);
        std::sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
            return x.timestamp_ms != y.timestamp_ms ? x.timestamp_ms < y.timestamp_ms : x.seq < y.seq;
        });
        EXPECT_EQ(f.srv->query_track(kA, a, b), oracle);
        EXPECT_EQ(f.srv->query_track(kA, a, b), f.srv->query_track(kA, a, b));
    }
    EXPECT_TRUE(f.srv->query_track(kA, kT0, kT0).empty());
    EXPECT_EQ(f.srv->all_records(kA).size(), 300u);
}

TEST(Server, AlertsAndTamper) {
    Fixture f("alerts");
    const std::vector<wire::TelemetryRecord> frame{rec(1, kT0), rec(2, kT0 + 1000, wire::EventCode::Panic),
                                                   rec(3, kT0 + 2000, wire::EventCode::Overspeed)};
    ASSERT_TRUE(f.srv->ingest(kA, frame, store::Transport::Tcp));
    f.now += 1000;
    auto forged = rec(3, kT0 + 2000);
    forged.speed_dkmh = 1;
    EXPECT_EQ(f.srv->ingest(kA, std::span(&forged, 1), store::Transport::Tcp)->accepted_count, 1);
    auto alerts = f.srv->alerts();
    ASSERT_EQ(alerts.size(), 3u);
    EXPECT_EQ(alerts[0].kind, "Panic");
    EXPECT_EQ(alerts[1].kind, "Overspeed");
    EXPECT_EQ(alerts[2].kind, "Tamper");
    EXPECT_EQ(f.srv->stats().tampers, 1u);
    EXPECT_EQ(f.srv->alerts(f.now).size(), 1u);
    // First write wins.
    EXPECT_EQ(f.srv->all_records(kA)[2], frame[2]);

    f.reopen();
    alerts = f.srv->alerts();
    ASSERT_EQ(alerts.size(), 3u);
    EXPECT_EQ(alerts[2].kind, "Tamper");
    EXPECT_EQ(alerts[0].seq, 2u);
    ASSERT_TRUE(f.srv->latest_positions()[0].record);
    EXPECT_EQ(f.srv->latest_positions()[0].record->seq, 3u);
}

TEST(Server, CommandOverSession) {
    Fixture f("cmd_session");
    std::vector<wire::CommandFrame> sent;
    const auto token = f.srv->attach_session(kA, [&](const wire::CommandFrame& c) { sent.push_back(c); });
    auto t = f.srv->send_command(kA, "OUT 0 1");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->state, CommandState::Delivered);
    EXPECT_EQ(t->channel, CommandChannel::Session);
    ASSERT_EQ(sent.size(), 1u);
    EXPECT_EQ(sent[0].text, "OUT 0 1");
    f.srv->on_command_reply(kB, {sent[0].command_id, 0, "spoof"});
    EXPECT_EQ(f.srv->command(t->id)->state, CommandState::Delivered);
    f.srv->on_command_reply(kA, {sent[0].command_id, 0, "OK OUT 0 1"});
    EXPECT_EQ(f.srv->command(t->id)->state, CommandState::Acked);
    EXPECT_EQ(f.srv->command(t->id)->reply, "OK OUT 0 1");
    EXPECT_EQ(f.srv->send_command(kA, "REBOOT NOW").error(), CommandError::BadCommand);
    EXPECT_EQ(f.srv->send_command(42, "GETGPS").error(), CommandError::UnknownDevice);
    f.srv->detach_session(kA, token);
    EXPECT_FALSE(f.srv->has_session(kA));

    // Audit log holds every transition.
    std::ifstream in(f.dir / "commands.jsonl");
    std::vector<std::string> states;
    for (std::string line; std::getline(in, line);)
        for (const char* s : {"\"Queued\"", "\"Delivered\"", "\"Acked\""})
            if (line.find(s) != std::string::npos && line.find("\"id\":1,") != std::string::npos) states.push_back(s);
    EXPECT_EQ(states, (std::vector<std::string>{"\"Queued\"", "\"Delivered\"", "\"Acked\""}));

    f.reopen();
    EXPECT_EQ(f.srv->command(t->id)->state, CommandState::Acked);
    EXPECT_EQ(f.srv->send_command(kA, "GETGPS")->id, t->id + 1);
}

TEST(Server, CommandOverSmsAndNoRoute) {
    Fixture f("cmd_sms");
    auto t = f.srv->send_command(kA, "OUT 0 1");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->channel, CommandChannel::Sms);
    const auto out = f.srv->take_sms_outbox();
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].peer, "+981111");
    EXPECT_EQ(out[0].text, "OUT 0 1");
    EXPECT_TRUE(f.srv->take_sms_outbox().empty());
    f.srv->handle_device_sms("+989999", "OK OUT 0 1");
    EXPECT_EQ(f.srv->command(t->id)->state, CommandState::Delivered);
    f.srv->handle_device_sms("+981111", "OK OUT 0 1");
    EXPECT_EQ(f.srv->command(t->id)->state, CommandState::Acked);

    // No phone on record and no session.
    ASSERT_TRUE(f.srv->set_enabled(kB, true));
    EXPECT_EQ(f.srv->send_command(kB, "GETGPS").error(), CommandError::NoRoute);

    Fixture off("cmd_nosms", false);
    EXPECT_EQ(off.srv->send_command(kA, "GETGPS").error(), CommandError::NoRoute);
}

TEST(Server, PositionSmsUpdatesLiveViewOnly) {
    Fixture f("pos_sms");
    auto sub = f.srv->subscribe();
    const auto r = rec(5, kT0 + 5000, wire::EventCode::Panic);
    f.srv->handle_device_sms("+10000000000", wire::format_position_sms(kA, r));
    EXPECT_EQ(f.srv->stats().stored_records, 0u);
    ASSERT_TRUE(f.srv->latest_positions()[0].record);
    EXPECT_NEAR(f.srv->latest_positions()[0].record->lat(), r.lat(), 1e-6);
    ASSERT_EQ(f.srv->alerts().size(), 1u);
    EXPECT_EQ(f.srv->alerts()[0].kind, "Panic");
    EXPECT_EQ(sub->pop()->type, "position");
    EXPECT_EQ(sub->pop()->type, "alert");
    // Unknown devices are ignored.
    f.srv->handle_device_sms("+1", wire::format_position_sms(123456789012345ULL, r));
    EXPECT_EQ(f.srv->alerts().size(), 1u);
}

TEST(Server, StreamFanOutAndOverflow) {
    Fixture f("stream");
    auto s1 = f.srv->subscribe();
    auto s2 = f.srv->subscribe();
    StreamFilter only_b;
    only_b.vehicles = {kB};
    auto s3 = f.srv->subscribe(only_b);
    const std::vector<wire::TelemetryRecord> one{rec(1, kT0)};
    ASSERT_TRUE(f.srv->ingest(kA, one, store::Transport::Tcp));
    for (auto* s : {&s1, &s2}) {
        const auto e = (*s)->pop();
        ASSERT_TRUE(e);
        EXPECT_EQ(e->type, "position");
        EXPECT_NE(e->data.find("\"seq\":1"), std::string::npos);
        EXPECT_FALSE((*s)->pop());
    }
    EXPECT_FALSE(s3->pop());
    // Replays are not pushed again.
    ASSERT_TRUE(f.srv->ingest(kA, one, store::Transport::Tcp));
    EXPECT_FALSE(s1->pop());

    // s1 keeps reading, s2 never does; backlog bound is 5.
    for (std::uint32_t seq = 2; seq <= 12; ++seq) {
        const std::vector<wire::TelemetryRecord> r{rec(seq, kT0 + seq)};
        ASSERT_TRUE(f.srv->ingest(kA, r, store::Transport::Tcp));
        ASSERT_TRUE(s1->pop());
    }
    EXPECT_TRUE(s2->closed());
    EXPECT_EQ(s2->close_reason(), "overflow");
    int drained = 0;
    std::optional<StreamEvent> e;
    while ((e = s2->pop()) && e->type != "disconnect") ++drained;
    EXPECT_EQ(drained, 5);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->data, R"({"reason":"overflow","type":"disconnect"})");
    EXPECT_FALSE(s2->pop());
    EXPECT_FALSE(s1->closed());
    EXPECT_EQ(f.srv->stats().subscribers, 2u);
}

TEST(Server, Missions) {
    Fixture f("missions");
    analytics::Mission m{0, kA, "Reza", "delivery", kT0, kT0 + 3'600'000};
    auto a = f.srv->create_mission(m);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->id, 1u);
    m.start = kT0 + 1'800'000;
    m.end = kT0 + 7'200'000;
    EXPECT_EQ(f.srv->create_mission(m).error(), MissionError::Overlap);
    m.start = kT0 + 3'600'000;
    EXPECT_EQ(f.srv->create_mission(m)->id, 2u);
    m.vehicle = 42;
    EXPECT_EQ(f.srv->create_mission(m).error(), MissionError::UnknownDevice);
    m.vehicle = kA;
    m.end = m.start;
    EXPECT_EQ(f.srv->create_mission(m).error(), MissionError::BadWindow);
    f.reopen();
    ASSERT_EQ(f.srv->missions().size(), 2u);
    EXPECT_EQ(f.srv->missions()[0].driver, "Reza");
    EXPECT_EQ(f.srv->missions()[1].end, kT0 + 7'200'000);
}

TEST(Server, ConfigParsing) {
    const auto c = parse_server_config(R"({
        "data_dir": "store", "tcp_port": 6000, "utc_offset": "+04:30", "sms_enabled": false,
        "devices": [{"imei": 356938035643809, "label": "x", "phone": "+1"}],
        "zones": ["1 circle 35.7 51.4 500", "2 rect 35.6 51.3 35.8 51.5"],
        "maintenance": [{"name": "engine oil", "vehicle_class": "truck", "interval_km": 10000}]
    })",
                                       "/etc/radfleet");
    ASSERT_TRUE(c) << c.error();
    EXPECT_EQ(c->data_dir, fs::path("/etc/radfleet/store"));
    EXPECT_EQ(c->tcp_port, 6000);
    EXPECT_EQ(c->udp_port, 5028);
    EXPECT_EQ(c->utc_offset_min, 270);
    EXPECT_FALSE(c->sms_enabled);
    EXPECT_EQ(c->registry_seed.size(), 1u);
    EXPECT_EQ(c->zones.size(), 2u);
    EXPECT_EQ(c->maintenance[0].warn_fraction, 0.9);

    EXPECT_FALSE(parse_server_config(R"({"tcp_prot": 1})"));
    EXPECT_FALSE(parse_server_config(R"({"tcp_port": 70000})"));
    EXPECT_FALSE(parse_server_config(R"({"zones": ["1 circle 35 51 -5"]})"));
    EXPECT_FALSE(parse_server_config(R"({"zones": ["1 circle 35 51 5", "1 circle 35 51 6"]})"));
    EXPECT_FALSE(parse_server_config(R"({"maintenance": [{"name": "x", "interval_km": 0, "vehicle_class": "a"}]})"));
    EXPECT_FALSE(parse_server_config("[1,2]"));
    EXPECT_FALSE(parse_server_config("{"));
}

// Kill the server process at random store steps while frames stream in. After
// restart every acked record is present; once the sender retransmits the
// rest, the store holds exactly the produced set.
TEST(Server, KillRestartKeepsAckedRecords) {
    const fs::path dir = fs::temp_directory_path() / ("radfleet_srv_kill_" + std::to_string(::getpid()));
    for (unsigned seed = 100; seed < 120; ++seed) {
        fs::remove_all(dir);
        std::vector<wire::TelemetryRecord> produced;
        for (std::uint32_t s = 1; s <= 400; ++s) produced.push_back(rec(s, kT0 + s * 1000));
        ServerConfig cfg;
        cfg.data_dir = dir;
        store::DeviceInfo a;
        a.imei = kA;
        cfg.registry_seed = {a};

        int fds[2];
        ASSERT_EQ(::pipe(fds), 0);
        const pid_t pid = ::fork();
        ASSERT_GE(pid, 0);
        if (pid == 0) {
            ::close(fds[0]);
            std::mt19937 rng(seed);
            const int kill_at = 50 + static_cast<int>(rng() % 1200);
            int steps = 0;
            store::RecordStore::Options opt;
            opt.crash_hook = [&](store::CrashPoint) {
                if (steps++ == kill_at) ::raise(SIGKILL);
            };
            auto srv = IngestServer::open(cfg, [] { return kT0; }, opt);
            if (!srv) ::_exit(3);
            std::size_t i = 0;
            while (i < produced.size()) {
                const std::size_t n = std::min<std::size_t>(1 + rng() % 20, produced.size() - i);
                const auto ack = (*srv)->ingest(kA, std::span(produced).subspan(i, n), store::Transport::Tcp);
                if (!ack) ::_exit(4);
                for (std::size_t k = 0; k < ack->accepted_count; ++k)
                    if (::write(fds[1], &produced[i + k].seq, 4) != 4) ::_exit(5);
                i += n;
            }
            ::_exit(0);
        }
        ::close(fds[1]);
        std::set<std::uint32_t> acked;
        std::uint32_t v;
        while (::read(fds[0], &v, 4) == 4) acked.insert(v);
        ::close(fds[0]);
        int status = 0;
        ::waitpid(pid, &status, 0);
        ASSERT_TRUE(WIFSIGNALED(status)) << "seed " << seed;

        auto srv = IngestServer::open(cfg, [] { return kT0; });
        ASSERT_TRUE(srv);
        std::set<std::uint32_t> stored;
        for (const auto& r : (*srv)->all_records(kA)) ASSERT_TRUE(stored.insert(r.seq).second);
        for (auto s : acked) ASSERT_TRUE(stored.count(s)) << "seed " << seed << " lost acked seq " << s;

        // Sender retransmits everything not acked.
        std::vector<wire::TelemetryRecord> resend;
        for (const auto& r : produced)
            if (!acked.count(r.seq)) resend.push_back(r);
        ASSERT_EQ((*srv)->ingest(kA, resend, store::Transport::Tcp)->accepted_count, resend.size());
        std::set<std::uint32_t> final_set, produced_set;
        for (const auto& r : (*srv)->all_records(kA)) ASSERT_TRUE(final_set.insert(r.seq).second);
        for (const auto& r : produced) produced_set.insert(r.seq);
        EXPECT_EQ(final_set, produced_set) << "seed " << seed;
        EXPECT_EQ((*srv)->all_records(kA), produced);
    }
    fs::remove_all(dir);
}
