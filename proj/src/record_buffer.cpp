#include "radfleet/record_buffer.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <system_error>

namespace radfleet::tracker {

RecordBuffer::RecordBuffer(std::size_t capacity_bytes)
    : capacity_(std::max(capacity_bytes - capacity_bytes % wire::kRecordSize, wire::kRecordSize)) {}

void RecordBuffer::evict_one() {
    auto& victim = normal_.empty() ? priority_ : normal_;
    victim.pop_front();
    ++evicted_;
}

std::size_t RecordBuffer::push(const wire::TelemetryRecord& r) {
    std::size_t evicted = 0;
    while (size_bytes() + wire::kRecordSize > capacity_) {
        evict_one();
        ++evicted;
    }
    auto& q = r.priority() ? priority_ : normal_;
    q.push_back({r.seq, wire::encode_record(r)});
    return evicted;
}

std::vector<wire::TelemetryRecord> RecordBuffer::peek(std::size_t max) const {
    std::vector<wire::TelemetryRecord> out;
    out.reserve(std::min(max, size()));
    auto n = normal_.begin();
    auto p = priority_.begin();
    while (out.size() < max && (n != normal_.end() || p != priority_.end())) {
        const bool take_normal = p == priority_.end() || (n != normal_.end() && n->seq < p->seq);
        const Slot& s = take_normal ? *n++ : *p++;
        out.push_back(wire::decode_record(s.bytes)->record);
    }
    return out;
}

bool RecordBuffer::erase_seq(std::deque<Slot>& q, std::uint32_t seq) {
    if (!q.empty() && q.front().seq == seq) {
        q.pop_front();
        return true;
    }
    const auto it = std::lower_bound(q.begin(), q.end(), seq, [](const Slot& s, std::uint32_t v) { return s.seq < v; });
    if (it == q.end() || it->seq != seq) return false;
    q.erase(it);
    return true;
}

std::size_t RecordBuffer::acknowledge(std::span<const std::uint32_t> seqs) {
    std::size_t removed = 0;
    for (std::uint32_t seq : seqs) {
        if (erase_seq(normal_, seq) || erase_seq(priority_, seq)) ++removed;
    }
    return removed;
}

std::vector<std::uint8_t> RecordBuffer::serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(size_bytes());
    auto n = normal_.begin();
    auto p = priority_.begin();
    while (n != normal_.end() || p != priority_.end()) {
        const bool take_normal = p == priority_.end() || (n != normal_.end() && n->seq < p->seq);
        const Slot& s = take_normal ? *n++ : *p++;
        out.insert(out.end(), s.bytes.begin(), s.bytes.end());
    }
    return out;
}

Expected<RecordBuffer, RecordBuffer::LoadError> RecordBuffer::deserialize(std::span<const std::uint8_t> bytes,
                                                                          std::size_t capacity_bytes) {
    if (bytes.size() % wire::kRecordSize != 0) return fail(LoadError::WrongLength);
    RecordBuffer buf(capacity_bytes);
    std::optional<std::uint32_t> last;
    for (std::size_t off = 0; off < bytes.size(); off += wire::kRecordSize) {
        const auto d = wire::decode_record(bytes.subspan(off, wire::kRecordSize));
        if (last && d->record.seq <= *last) return fail(LoadError::Unordered);
        last = d->record.seq;
        buf.push(d->record);
    }
    return buf;
}

bool RecordBuffer::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return false;
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) return false;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    return !ec;
}

Expected<RecordBuffer, RecordBuffer::LoadError> RecordBuffer::load(const std::filesystem::path& path,
                                                                   std::size_t capacity_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return fail(LoadError::Io);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes, capacity_bytes);
}

}  // namespace radfleet::tracker
