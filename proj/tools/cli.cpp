#include "cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "radfleet/api.hpp"
#include "radfleet/net.hpp"
#include "radfleet/server.hpp"
#include "radfleet/sim.hpp"

namespace radfleet::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Runtime failure: message goes to stderr, exit code 2.
struct Failure {
    std::string message;
};

struct Globals {
    std::string config_path;
    std::string data_dir;
};

server::ServerConfig load_config(const Globals& g) {
    server::ServerConfig c;
    if (!g.config_path.empty()) {
        auto loaded = server::load_server_config(g.config_path);
        if (!loaded) throw Failure{loaded.error()};
        c = std::move(*loaded);
    }
    if (!g.data_dir.empty()) c.data_dir = g.data_dir;
    return c;
}

std::unique_ptr<server::IngestServer> open_server(const Globals& g, server::Clock clock = server::system_clock_ms) {
    auto c = load_config(g);
    c.sms_enabled = false;
    auto srv = server::IngestServer::open(std::move(c), std::move(clock));
    if (!srv) throw Failure{srv.error()};
    return std::move(*srv);
}

void print_table(std::ostream& out, const analytics::Table& t, bool csv) {
    out << (csv ? analytics::export_csv(t) : analytics::format_text_table(t));
}

std::string opt_num(const std::optional<double>& v) { return v ? analytics::format_fixed(*v, 1) : ""; }

// ---- serve ----------------------------------------------------------------------

int serve(const Globals& g, std::ostream& err) {
    // signals are taken synchronously; block them before any thread exists
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    const auto c = load_config(g);
    auto srv = server::IngestServer::open(c);
    if (!srv) throw Failure{srv.error()};
    auto net = net::NetServer::start(**srv, c.bind_address, {c.tcp_port, c.udp_port, c.http_port});
    if (!net) throw Failure{net.error()};
    const auto p = (*net)->ports();
    err << "radfleet: serving " << c.data_dir.string() << " on " << c.bind_address << " tcp " << p.tcp << " udp "
        << p.udp << " http " << p.http << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    err << "radfleet: stopping" << std::endl;
    (*net)->stop();
    return 0;
}

// ---- simulate -------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    bool csv = false;
    std::string trace;
};

int simulate(const Globals& g, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    auto sc = sim::load_scenario(a.scenario, a.seed);
    if (!sc) throw Failure{sc.error()};

    fs::path dir = g.data_dir;
    const bool temporary = dir.empty();
    if (temporary) {
        dir = fs::temp_directory_path() / ("radfleet-sim-" + std::to_string(::getpid()));
        fs::remove_all(dir);
    }
    sim::RunOptions opts;
    opts.data_dir = dir;
    opts.trace_deliveries = !a.trace.empty();
    auto r = sim::run_scenario(*sc, opts);
    if (temporary) fs::remove_all(dir);
    if (!r) throw Failure{std::string(sim::to_string(r.error().kind)) + ": " + r.error().message};

    if (!a.trace.empty()) {
        std::ofstream t(a.trace, std::ios::binary);
        for (const auto& line : r->delivery_log) t << line << '\n';
        if (!t) throw Failure{"cannot write " + a.trace};
    }
    out << (a.csv ? sim::report_csv(*r) : sim::report_summary(*r));
    if (!r->passed()) {
        for (const auto& o : r->oracles)
            if (!o.pass) err << "radfleet: oracle " << o.name << " failed: " << o.detail << '\n';
        return 2;
    }
    return 0;
}

// ---- device ---------------------------------------------------------------------

struct DeviceArgs {
    std::uint64_t imei = 0;
    std::string label;
    std::string phone;
    std::string vehicle_class;
    std::optional<double> speed_limit;
    double tank_l = 60.0;
    bool csv = false;
};

analytics::Table device_table(const std::vector<store::DeviceInfo>& devs) {
    analytics::Table t;
    t.header = {"imei", "label", "enabled", "phone", "class", "speed_limit_kmh", "tank_l"};
    for (const auto& d : devs)
        t.rows.push_back({std::to_string(d.imei), d.label, d.enabled ? "yes" : "no", d.phone, d.vehicle_class,
                          opt_num(d.speed_limit_kmh), analytics::format_fixed(d.tank_capacity_l, 1)});
    return t;
}

int device_add(const Globals& g, const DeviceArgs& a, std::ostream& err) {
    auto srv = open_server(g);
    store::DeviceInfo d;
    d.imei = a.imei;
    d.label = a.label.empty() ? std::to_string(a.imei) : a.label;
    d.phone = a.phone;
    d.vehicle_class = a.vehicle_class;
    d.speed_limit_kmh = a.speed_limit;
    d.tank_capacity_l = a.tank_l;
    d.created_at = srv->now();
    if (auto ok = srv->add_device(d); !ok) throw Failure{std::string(store::to_string(ok.error()))};
    err << "radfleet: added " << a.imei << '\n';
    return 0;
}

int device_enable(const Globals& g, std::uint64_t imei, bool enabled) {
    auto srv = open_server(g);
    if (auto ok = srv->set_enabled(imei, enabled); !ok) throw Failure{std::string(store::to_string(ok.error()))};
    return 0;
}

// ---- report / nearest -------------------------------------------------------------

struct ReportArgs {
    std::string kind;
    std::string vehicle, from, to, month, month_a, month_b, id, limit;
    bool csv = false;
};

int report(const Globals& g, const ReportArgs& a, std::ostream& out) {
    auto srv = open_server(g);
    api::Params p;
    auto set = [&](const char* k, const std::string& v) {
        if (!v.empty()) p[k] = v;
    };
    set("vehicle", a.vehicle);
    set("from", a.from);
    set("to", a.to);
    set("id", a.id);
    set("limit", a.limit);
    // daily takes a month; --from may carry it as a date
    set("month", !a.month.empty() ? a.month : a.kind == "daily" ? a.from.substr(0, 7) : "");
    // compare: --month-a/--month-b, or --from/--to read as the two months
    set("monthA", !a.month_a.empty() ? a.month_a : a.from.substr(0, 7));
    set("monthB", !a.month_b.empty() ? a.month_b : a.to.substr(0, 7));
    if (a.kind == "monthly") {
        set("from", a.from.substr(0, 7));
        set("to", a.to.substr(0, 7));
    }
    auto t = api::report_table(*srv, a.kind, p);
    if (!t) throw Failure{t.error().message};
    print_table(out, *t, a.csv);
    return 0;
}

struct NearestArgs {
    double lat = 0.0, lon = 0.0;
    std::size_t limit = 5;
    std::string at;
    bool csv = false;
};

int nearest(const Globals& g, const NearestArgs& a, std::ostream& out) {
    server::Clock clock = server::system_clock_ms;
    if (!a.at.empty()) {
        const auto c = load_config(g);
        const auto t = api::parse_time_param(a.at, c.utc_offset_min);
        if (!t) throw Failure{"bad --at time '" + a.at + "'"};
        clock = [v = *t] { return v; };
    }
    const geo::GeoPoint point{a.lat, a.lon};
    if (!geo::is_valid(point)) throw Failure{"coordinates out of range"};
    auto srv = open_server(g, clock);
    const auto res = api::nearest(*srv, point, a.limit);
    analytics::Table t;
    t.header = {"rank", "imei", "label", "distance_km", "age_s", "status"};
    std::size_t rank = 0;
    auto add = [&](const analytics::NearestEntry& e, const char* status) {
        t.rows.push_back({std::to_string(++rank), std::to_string(e.vehicle), e.label,
                          analytics::format_fixed(e.distance_m / 1000.0, 3), analytics::format_fixed(e.age_s, 0),
                          status});
    };
    for (const auto& e : res.ranked) add(e, "fresh");
    for (const auto& e : res.stale) add(e, "stale");
    print_table(out, t, a.csv);
    return 0;
}

// ---- command (HTTP) -----------------------------------------------------------------

struct CommandArgs {
    std::uint64_t vehicle = 0;
    std::string out_spec, setparam, text, host = "127.0.0.1";
    std::uint16_t port = 0;
};

std::string command_text(const CommandArgs& a) {
    if (!a.out_spec.empty()) return "OUT " + a.out_spec;
    if (!a.setparam.empty()) return "SETPARAM " + a.setparam;
    return a.text;
}

int command(const Globals& g, const CommandArgs& a, std::ostream& out) {
    const std::string text = command_text(a);
    const std::uint16_t port = a.port ? a.port : load_config(g).http_port;
    const auto r = net::http_request(a.host, port, "POST", "/api/commands",
                                     json{{"vehicle", a.vehicle}, {"command", text}}.dump());
    if (!r) throw Failure{"server unreachable: " + r.error()};
    out << r->body << '\n';
    if (r->status != 202) throw Failure{"server answered " + std::to_string(r->status)};
    return 0;
}

// ---- replay -------------------------------------------------------------------------

int replay(const Globals& g, const std::string& file, std::ostream& out) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Failure{"cannot read " + file};
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), {}};
    auto srv = open_server(g);
    const auto before = srv->stats();

    wire::StreamDecoder dec;
    dec.feed(bytes);
    std::uint64_t frames = 0, records = 0, rejected = 0;
    while (auto m = dec.next()) {
        const auto* f = std::get_if<wire::Frame>(&*m);
        if (!f || f->is_login()) continue;
        ++frames;
        records += f->records.size();
        const auto ack = srv->ingest(f->imei, f->records, store::Transport::Tcp);
        if (!ack) {
            if (ack.error() == server::IngestError::StorageFailure) throw Failure{"store write failed"};
            rejected += f->records.size();
        }
    }
    const auto after = srv->stats();
    analytics::Table t;
    t.header = {"frames", "records", "stored", "duplicates", "rejected", "corrupt_frames"};
    t.rows.push_back({std::to_string(frames), std::to_string(records),
                      std::to_string(after.stored_records - before.stored_records),
                      std::to_string(after.duplicates - before.duplicates), std::to_string(rejected),
                      std::to_string(dec.crc_failures())});
    print_table(out, t, false);
    return rejected ? 2 : 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fleet telemetry server, simulator and reports", "radfleet"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Server config JSON")->envname("RADFLEET_CONFIG");
    app.add_option("--data-dir", g.data_dir, "Data directory (overrides the config)");

    std::function<int()> run;

    auto* serve_cmd = app.add_subcommand("serve", "Run the ingest server (TCP, UDP, HTTP)");
    serve_cmd->add_option("--config", g.config_path, "Server config JSON")->envname("RADFLEET_CONFIG");
    serve_cmd->callback([&] { run = [&] { return serve(g, err); }; });

    SimulateArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a scenario and check its oracles");
    sim_cmd->add_option("--scenario", sa.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--seed", sa.seed, "Override the scenario seed");
    sim_cmd->add_option("--data-dir", g.data_dir, "Keep the server store here (must be empty)");
    sim_cmd->add_option("--trace", sa.trace, "Write the delivery trace to this file");
    sim_cmd->add_flag("--csv", sa.csv, "Per-vehicle CSV instead of the summary");
    sim_cmd->callback([&] { run = [&] { return simulate(g, sa, out, err); }; });

    DeviceArgs da;
    auto* dev_cmd = app.add_subcommand("device", "Manage the device registry");
    dev_cmd->require_subcommand(1);
    auto* dev_add = dev_cmd->add_subcommand("add", "Register a device");
    dev_add->add_option("--imei", da.imei, "15-digit IMEI")->required()->check(CLI::Range(std::uint64_t{1}, wire::kMaxImei));
    dev_add->add_option("--label", da.label);
    dev_add->add_option("--phone", da.phone, "SIM number for SMS commands");
    dev_add->add_option("--class", da.vehicle_class, "Vehicle class for maintenance rules");
    dev_add->add_option("--speed-limit", da.speed_limit, "km/h");
    dev_add->add_option("--tank", da.tank_l, "Tank capacity in litres");
    dev_add->callback([&] { run = [&] { return device_add(g, da, err); }; });
    auto* dev_list = dev_cmd->add_subcommand("list", "List registered devices");
    dev_list->add_flag("--csv", da.csv);
    dev_list->callback([&] {
        run = [&] {
            print_table(out, device_table(open_server(g)->devices()), da.csv);
            return 0;
        };
    });
    auto* dev_disable = dev_cmd->add_subcommand("disable", "Refuse logins and data from a device");
    dev_disable->add_option("--imei", da.imei)->required();
    dev_disable->callback([&] { run = [&] { return device_enable(g, da.imei, false); }; });
    auto* dev_enable = dev_cmd->add_subcommand("enable", "Accept a disabled device again");
    dev_enable->add_option("--imei", da.imei)->required();
    dev_enable->callback([&] { run = [&] { return device_enable(g, da.imei, true); }; });

    ReportArgs ra;
    auto* rep_cmd = app.add_subcommand("report", "Print a report table");
    rep_cmd->add_option("kind", ra.kind, "Report kind")
        ->required()
        ->check(CLI::IsMember({"daily", "monthly", "compare", "fuel-by-speed", "maintenance", "mission", "trips",
                               "stops", "overspeed"}));
    rep_cmd->add_option("--vehicle", ra.vehicle, "IMEI");
    rep_cmd->add_option("--from", ra.from, "Start time, date or month");
    rep_cmd->add_option("--to", ra.to, "End time, date or month");
    rep_cmd->add_option("--month", ra.month, "YYYY-MM (daily)");
    rep_cmd->add_option("--month-a", ra.month_a, "YYYY-MM (compare)");
    rep_cmd->add_option("--month-b", ra.month_b, "YYYY-MM (compare)");
    rep_cmd->add_option("--id", ra.id, "Mission id");
    rep_cmd->add_option("--limit", ra.limit, "Speed limit for overspeed, km/h");
    rep_cmd->add_flag("--csv", ra.csv, "RFC 4180 CSV instead of a text table");
    rep_cmd->callback([&] { run = [&] { return report(g, ra, out); }; });

    NearestArgs na;
    auto* near_cmd = app.add_subcommand("nearest", "Rank vehicles by distance to a point");
    near_cmd->add_option("--lat", na.lat)->required()->check(CLI::Range(-90.0, 90.0));
    near_cmd->add_option("--lon", na.lon)->required()->check(CLI::Range(-180.0, 180.0));
    near_cmd->add_option("--limit", na.limit, "Fresh vehicles to list");
    near_cmd->add_option("--at", na.at, "Reference time for staleness (default now)");
    near_cmd->add_flag("--csv", na.csv);
    near_cmd->callback([&] { run = [&] { return nearest(g, na, out); }; });

    CommandArgs ca;
    auto* cmd_cmd = app.add_subcommand("command", "Send a device command through a running server");
    cmd_cmd->add_option("--vehicle", ca.vehicle, "IMEI")->required();
    auto* o_out = cmd_cmd->add_option("--out", ca.out_spec, "\"<bit> <0|1>\"");
    auto* o_set = cmd_cmd->add_option("--setparam", ca.setparam, "key=value");
    auto* o_text = cmd_cmd->add_option("--text", ca.text, "Raw command text");
    o_out->excludes(o_set)->excludes(o_text);
    o_set->excludes(o_text);
    cmd_cmd->add_option("--host", ca.host);
    cmd_cmd->add_option("--port", ca.port, "HTTP port (default from the config)");
    cmd_cmd->callback([&] {
        if (ca.out_spec.empty() && ca.setparam.empty() && ca.text.empty())
            throw CLI::ValidationError("command", "one of --out, --setparam or --text is required");
        if (const auto c = wire::parse_command(command_text(ca)); !c)
            throw CLI::ValidationError("command", std::string(wire::to_string(c.error())) + ": '" +
                                                      command_text(ca) + "'");
        run = [&] { return command(g, ca, out); };
    });

    std::string buffer_file;
    auto* replay_cmd = app.add_subcommand("replay", "Load a tracker flash dump into the store");
    replay_cmd->add_option("--device-buffer-file", buffer_file, "Concatenated wire frames")
        ->required()
        ->check(CLI::ExistingFile);
    replay_cmd->callback([&] { run = [&] { return replay(g, buffer_file, out); }; });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        if (args.empty()) {
            err << app.help();
        } else {
            app.exit(e, out, err);
        }
        return 1;
    }
    try {
        return run ? run() : 1;
    } catch (const Failure& f) {
        err << "radfleet: " << f.message << '\n';
        return 2;
    }
}

}  // namespace radfleet::cli
