#include "radfleet/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

#include "radfleet/json_io.hpp"

namespace radfleet::store {

namespace {

constexpr std::size_t kIndexEntrySize = 24;

using json = nlohmann::json;
using json_io::device_from_json;


std::string imei_name(std::uint64_t imei) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%015llu", static_cast<unsigned long long>(imei));
    return buf;
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n, off_t offset) {
    while (n > 0) {
        const ssize_t w = ::pwrite(fd, data, n, offset);
        if (w < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
        offset += w;
    }
    return true;
}

std::optional<std::vector<std::uint8_t>> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

template <typename T>
void put_le(std::uint8_t* p, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

std::array<std::uint8_t, kIndexEntrySize> encode_index(std::uint32_t seq, Transport t, std::uint64_t offset,
                                                       TimestampMs received_at) {
    std::array<std::uint8_t, kIndexEntrySize> e{};
    put_le(e.data(), seq);
    e[4] = static_cast<std::uint8_t>(t);
    put_le(e.data() + 8, offset);
    put_le(e.data() + 16, received_at);
    return e;
}

}  // namespace

std::string_view to_string(Transport t) {
    switch (t) {
        case Transport::Tcp: return "tcp";
        case Transport::Udp: return "udp";
        case Transport::Sms: return "sms";
    }
    return "?";
}

std::string_view to_string(StoreError e) {
    switch (e) {
        case StoreError::Io: return "Io";
        case StoreError::UnknownDevice: return "UnknownDevice";
        case StoreError::DuplicateDevice: return "DuplicateDevice";
        case StoreError::InvalidImei: return "InvalidImei";
        case StoreError::Corrupt: return "Corrupt";
    }
    return "?";
}

RecordStore::RecordStore(RecordStore&& o) noexcept
    : dir_(std::move(o.dir_)),
      options_(std::move(o.options_)),
      registry_(std::move(o.registry_)),
      logs_(std::move(o.logs_)),
      recovery_(o.recovery_),
      duplicates_(o.duplicates_) {
    o.logs_.clear();
}

RecordStore& RecordStore::operator=(RecordStore&& o) noexcept {
    if (this != &o) {
        close_all();
        dir_ = std::move(o.dir_);
        options_ = std::move(o.options_);
        registry_ = std::move(o.registry_);
        logs_ = std::move(o.logs_);
        o.logs_.clear();
        recovery_ = o.recovery_;
        duplicates_ = o.duplicates_;
    }
    return *this;
}

RecordStore::~RecordStore() { close_all(); }

void RecordStore::close_all() {
    for (auto& [imei, log] : logs_) {
        if (log.log_fd >= 0) ::close(log.log_fd);
        if (log.idx_fd >= 0) ::close(log.idx_fd);
        log.log_fd = log.idx_fd = -1;
    }
    logs_.clear();
}

Expected<RecordStore, StoreError> RecordStore::open(const std::filesystem::path& dir, Options options) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return fail(StoreError::Io);
    RecordStore s;
    s.dir_ = dir;
    s.options_ = std::move(options);

    const auto reg_path = dir / "registry.json";
    if (std::filesystem::exists(reg_path)) {
        const auto bytes = read_file(reg_path);
        if (!bytes) return fail(StoreError::Io);
        try {
            const auto j = json::parse(bytes->begin(), bytes->end());
            for (const auto& d : j.at("devices")) {
                auto info = device_from_json(d);
                s.registry_[info.imei] = std::move(info);
            }
        } catch (const json::exception&) {
            return fail(StoreError::Corrupt);
        }
    }
    for (const auto& [imei, info] : s.registry_) {
        if (auto r = s.load_log(imei); !r) return fail(r.error());
    }
    return s;
}

Expected<Ok, StoreError> RecordStore::load_log(std::uint64_t imei) {
    const auto log_path = dir_ / (imei_name(imei) + ".log");
    const auto idx_path = dir_ / (imei_name(imei) + ".idx");
    if (!std::filesystem::exists(log_path)) return Ok{};

    auto log_bytes = read_file(log_path).value_or(std::vector<std::uint8_t>{});
    auto idx_bytes = read_file(idx_path).value_or(std::vector<std::uint8_t>{});

    const std::size_t log_keep = log_bytes.size() - log_bytes.size() % wire::kRecordSize;
    recovery_.truncated_log_bytes += log_bytes.size() - log_keep;
    const std::size_t n_log = log_keep / wire::kRecordSize;

    auto dev = open_log(imei);
    if (!dev) return fail(dev.error());
    DeviceLog& log = **dev;
    if (::ftruncate(log.log_fd, static_cast<off_t>(log_keep)) != 0) return fail(StoreError::Io);

    // Keep the longest index prefix that agrees with the log.
    std::size_t n_idx = 0;
    const std::size_t idx_entries = idx_bytes.size() / kIndexEntrySize;
    for (; n_idx < idx_entries && n_idx < n_log; ++n_idx) {
        const std::uint8_t* e = idx_bytes.data() + n_idx * kIndexEntrySize;
        const auto off = get_le<std::uint64_t>(e + 8);
        const auto rec = wire::decode_record(std::span(log_bytes).subspan(n_idx * wire::kRecordSize, wire::kRecordSize));
        if (off != n_idx * wire::kRecordSize || e[4] > 2 || get_le<std::uint32_t>(e) != rec->record.seq) break;
        PersistedRecord pr{rec->record, get_le<TimestampMs>(e + 16), static_cast<Transport>(e[4])};
        log.by_seq.emplace(pr.record.seq, log.records.size());
        log.records.push_back(pr);
    }
    recovery_.truncated_index_bytes += idx_bytes.size() - n_idx * kIndexEntrySize;
    if (::ftruncate(log.idx_fd, static_cast<off_t>(n_idx * kIndexEntrySize)) != 0) return fail(StoreError::Io);

    // Complete log records whose index entry never made it to disk.
    for (std::size_t i = n_idx; i < n_log; ++i) {
        const auto rec = wire::decode_record(std::span(log_bytes).subspan(i * wire::kRecordSize, wire::kRecordSize));
        PersistedRecord pr{rec->record, rec->record.time(), Transport::Tcp};
        const auto e = encode_index(pr.record.seq, pr.transport, i * wire::kRecordSize, pr.received_at);
        if (!write_all(log.idx_fd, e.data(), e.size(), static_cast<off_t>(i * kIndexEntrySize)))
            return fail(StoreError::Io);
        log.by_seq.emplace(pr.record.seq, log.records.size());
        log.records.push_back(pr);
        ++recovery_.rebuilt_index_entries;
    }
    return Ok{};
}

Expected<RecordStore::DeviceLog*, StoreError> RecordStore::open_log(std::uint64_t imei) {
    auto it = logs_.find(imei);
    if (it != logs_.end()) return &it->second;
    DeviceLog log;
    const auto base = dir_ / imei_name(imei);
    log.log_fd = ::open((base.string() + ".log").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    log.idx_fd = ::open((base.string() + ".idx").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (log.log_fd < 0 || log.idx_fd < 0) {
        if (log.log_fd >= 0) ::close(log.log_fd);
        if (log.idx_fd >= 0) ::close(log.idx_fd);
        return fail(StoreError::Io);
    }
    return &logs_.emplace(imei, std::move(log)).first->second;
}

Expected<Ok, StoreError> RecordStore::save_registry() const {
    json devs = json::array();
    for (const auto& [imei, d] : registry_) devs.push_back(json_io::to_json(d));
    const std::string text = json{{"devices", devs}}.dump(2) + "\n";
    const auto path = dir_ / "registry.json";
    const auto tmp = dir_ / "registry.json.tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) return fail(StoreError::Io);
    const bool ok = write_all(fd, reinterpret_cast<const std::uint8_t*>(text.data()), text.size(), 0) &&
                    (!options_.sync_writes || ::fsync(fd) == 0);
    ::close(fd);
    if (!ok) return fail(StoreError::Io);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) return fail(StoreError::Io);
    return Ok{};
}

Expected<Ok, StoreError> RecordStore::add_device(const DeviceInfo& info) {
    if (info.imei == 0 || info.imei > wire::kMaxImei) return fail(StoreError::InvalidImei);
    if (registry_.count(info.imei)) return fail(StoreError::DuplicateDevice);
    registry_[info.imei] = info;
    if (auto r = save_registry(); !r) {
        registry_.erase(info.imei);
        return r;
    }
    return Ok{};
}

Expected<Ok, StoreError> RecordStore::update_device(const DeviceInfo& info) {
    auto it = registry_.find(info.imei);
    if (it == registry_.end()) return fail(StoreError::UnknownDevice);
    const DeviceInfo old = it->second;
    it->second = info;
    if (auto r = save_registry(); !r) {
        it->second = old;
        return r;
    }
    return Ok{};
}

const DeviceInfo* RecordStore::device(std::uint64_t imei) const {
    const auto it = registry_.find(imei);
    return it == registry_.end() ? nullptr : &it->second;
}

std::vector<DeviceInfo> RecordStore::devices() const {
    std::vector<DeviceInfo> out;
    for (const auto& [imei, d] : registry_) out.push_back(d);
    return out;
}

Expected<AppendStatus, StoreError> RecordStore::append(std::uint64_t imei, const wire::TelemetryRecord& r,
                                                       Transport transport, TimestampMs received_at) {
    if (!registry_.count(imei)) return fail(StoreError::UnknownDevice);
    auto dev = open_log(imei);
    if (!dev) return fail(dev.error());
    DeviceLog& log = **dev;

    if (const auto it = log.by_seq.find(r.seq); it != log.by_seq.end()) {
        ++duplicates_;
        return log.records[it->second].record == r ? AppendStatus::Duplicate : AppendStatus::Tamper;
    }

    const auto bytes = wire::encode_record(r);
    const std::size_t index = log.records.size();
    const auto offset = static_cast<off_t>(index * wire::kRecordSize);
    const auto& hook = options_.crash_hook;

    if (hook) hook(CrashPoint::BeforeLogWrite);
    if (hook) {
        constexpr std::size_t half = wire::kRecordSize / 2;
        if (!write_all(log.log_fd, bytes.data(), half, offset)) return fail(StoreError::Io);
        hook(CrashPoint::MidLogWrite);
        if (!write_all(log.log_fd, bytes.data() + half, half, offset + half)) return fail(StoreError::Io);
    } else if (!write_all(log.log_fd, bytes.data(), bytes.size(), offset)) {
        return fail(StoreError::Io);
    }

    if (hook) hook(CrashPoint::BeforeIndexWrite);
    const auto entry = encode_index(r.seq, transport, static_cast<std::uint64_t>(offset), received_at);
    if (!write_all(log.idx_fd, entry.data(), entry.size(), static_cast<off_t>(index * kIndexEntrySize)))
        return fail(StoreError::Io);
    if (options_.sync_writes && (::fdatasync(log.log_fd) != 0 || ::fdatasync(log.idx_fd) != 0))
        return fail(StoreError::Io);
    if (hook) hook(CrashPoint::AfterIndexWrite);

    log.by_seq.emplace(r.seq, index);
    log.records.push_back({r, received_at, transport});
    return AppendStatus::Stored;
}

std::span<const PersistedRecord> RecordStore::records(std::uint64_t imei) const {
    const auto it = logs_.find(imei);
    if (it == logs_.end()) return {};
    return it->second.records;
}

const PersistedRecord* RecordStore::find(std::uint64_t imei, std::uint32_t seq) const {
    const auto it = logs_.find(imei);
    if (it == logs_.end()) return nullptr;
    const auto s = it->second.by_seq.find(seq);
    return s == it->second.by_seq.end() ? nullptr : &it->second.records[s->second];
}

std::size_t RecordStore::total_records() const {
    std::size_t n = 0;
    for (const auto& [imei, log] : logs_) n += log.records.size();
    return n;
}

}  // namespace radfleet::store
