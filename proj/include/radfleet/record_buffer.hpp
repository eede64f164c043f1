#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::tracker {

/// Device flash capacity: 16 MiB.
inline constexpr std::size_t kFlashCapacityBytes = std::size_t{16} << 20;

/// Store-and-forward FIFO of encoded 64-byte records.
///
/// Records drain in seq order. When full, the oldest non-priority record is
/// evicted first; priority (alert) records go only when nothing else is left.
/// Contents are kept in their wire encoding so a saved buffer file is the
/// exact byte image of what would go on the wire.
class RecordBuffer {
public:
    explicit RecordBuffer(std::size_t capacity_bytes = kFlashCapacityBytes);

    std::size_t capacity_bytes() const { return capacity_; }
    std::size_t capacity_records() const { return capacity_ / wire::kRecordSize; }
    std::size_t size() const { return normal_.size() + priority_.size(); }
    std::size_t size_bytes() const { return size() * wire::kRecordSize; }
    bool empty() const { return size() == 0; }
    std::uint64_t evicted() const { return evicted_; }

    /// Appends a record (seq must exceed every buffered seq). Returns how many
    /// records were evicted to make room.
    std::size_t push(const wire::TelemetryRecord& r);

    /// Up to `max` oldest records in seq order.
    std::vector<wire::TelemetryRecord> peek(std::size_t max) const;

    /// Removes the given seqs if still buffered; returns how many were removed.
    std::size_t acknowledge(std::span<const std::uint32_t> seqs);

    /// Concatenated 64-byte records in seq order.
    std::vector<std::uint8_t> serialize() const;

    enum class LoadError { Io, WrongLength, Unordered };
    static Expected<RecordBuffer, LoadError> deserialize(std::span<const std::uint8_t> bytes,
                                                         std::size_t capacity_bytes = kFlashCapacityBytes);

    /// Atomic replace of `path` with serialize().
    bool save(const std::filesystem::path& path) const;
    static Expected<RecordBuffer, LoadError> load(const std::filesystem::path& path,
                                                  std::size_t capacity_bytes = kFlashCapacityBytes);

    friend bool operator==(const RecordBuffer& a, const RecordBuffer& b) {
        return a.capacity_ == b.capacity_ && a.normal_ == b.normal_ && a.priority_ == b.priority_;
    }

private:
    struct Slot {
        std::uint32_t seq;
        wire::RecordBytes bytes;
        friend bool operator==(const Slot&, const Slot&) = default;
    };

    void evict_one();
    static bool erase_seq(std::deque<Slot>& q, std::uint32_t seq);

    std::size_t capacity_;
    std::deque<Slot> normal_;
    std::deque<Slot> priority_;
    std::uint64_t evicted_ = 0;
};

}  // namespace radfleet::tracker
