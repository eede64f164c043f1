#pragma once

// On-disk record store.
//
// Layout of the data directory:
//   registry.json          device registry snapshot (atomic replace)
//   <imei>.log             append-only 64-byte records, arrival order
//   <imei>.idx             one 24-byte entry per log record:
//                          seq u32 | transport u8 | pad[3] | offset u64 | received_at i64 (little-endian)
//
// A record counts as stored once both its log bytes and its index entry are
// written. On open, a torn tail in either file is truncated and index
// entries missing for complete log records are rebuilt.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/time.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::store {

enum class Transport : std::uint8_t { Tcp = 0, Udp = 1, Sms = 2 };
std::string_view to_string(Transport t);

struct PersistedRecord {
    wire::TelemetryRecord record;
    TimestampMs received_at = 0;
    Transport transport = Transport::Tcp;
    friend bool operator==(const PersistedRecord&, const PersistedRecord&) = default;
};

struct DeviceInfo {
    std::uint64_t imei = 0;
    std::string label;
    bool enabled = true;
    std::optional<double> speed_limit_kmh;
    TimestampMs created_at = 0;
    std::string phone;          // SMS route for commands
    std::string vehicle_class;  // maintenance scope
    double tank_capacity_l = 60.0;
    friend bool operator==(const DeviceInfo&, const DeviceInfo&) = default;
};

enum class AppendStatus { Stored, Duplicate, Tamper };

enum class StoreError { Io, UnknownDevice, DuplicateDevice, InvalidImei, Corrupt };
std::string_view to_string(StoreError e);

/// Injection points for crash tests. The hook runs before the named step.
enum class CrashPoint { BeforeLogWrite, MidLogWrite, BeforeIndexWrite, AfterIndexWrite };

struct RecoveryStats {
    std::size_t truncated_log_bytes = 0;
    std::size_t truncated_index_bytes = 0;
    std::size_t rebuilt_index_entries = 0;
};

class RecordStore {
public:
    struct Options {
        bool sync_writes = false;  // fdatasync after each append
        std::function<void(CrashPoint)> crash_hook;
    };

    static Expected<RecordStore, StoreError> open(const std::filesystem::path& dir, Options options);
    static Expected<RecordStore, StoreError> open(const std::filesystem::path& dir) { return open(dir, Options{}); }

    RecordStore(RecordStore&&) noexcept;
    RecordStore& operator=(RecordStore&&) noexcept;
    ~RecordStore();

    const std::filesystem::path& dir() const { return dir_; }
    const RecoveryStats& recovery() const { return recovery_; }

    // Registry.
    Expected<Ok, StoreError> add_device(const DeviceInfo& info);
    Expected<Ok, StoreError> update_device(const DeviceInfo& info);
    const DeviceInfo* device(std::uint64_t imei) const;
    std::vector<DeviceInfo> devices() const;  // ascending imei

    /// Durably appends unless (imei, seq) already exists. A duplicate whose
    /// bytes differ from the stored ones reports Tamper; the first write wins.
    Expected<AppendStatus, StoreError> append(std::uint64_t imei, const wire::TelemetryRecord& r, Transport transport,
                                              TimestampMs received_at);

    /// Arrival order.
    std::span<const PersistedRecord> records(std::uint64_t imei) const;
    const PersistedRecord* find(std::uint64_t imei, std::uint32_t seq) const;
    std::size_t total_records() const;
    std::uint64_t duplicates_dropped() const { return duplicates_; }

private:
    RecordStore() = default;

    struct DeviceLog {
        int log_fd = -1;
        int idx_fd = -1;
        std::vector<PersistedRecord> records;
        std::unordered_map<std::uint32_t, std::size_t> by_seq;
    };

    Expected<Ok, StoreError> save_registry() const;
    Expected<DeviceLog*, StoreError> open_log(std::uint64_t imei);
    Expected<Ok, StoreError> load_log(std::uint64_t imei);
    void close_all();

    std::filesystem::path dir_;
    Options options_;
    std::map<std::uint64_t, DeviceInfo> registry_;
    std::map<std::uint64_t, DeviceLog> logs_;
    RecoveryStats recovery_;
    std::uint64_t duplicates_ = 0;
};

}  // namespace radfleet::store
