#include "biphoton/timetag.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "biphoton/io.hpp"

namespace biphoton {

bool TimeTagStream::is_sorted() const { return std::is_sorted(timestamps.begin(), timestamps.end()); }

namespace bttg {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'T', 'T', 'G'};

void put_le(std::vector<std::byte>& out, std::uint64_t value, int width) {
    for (int i = 0; i < width; ++i) {
        out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xffU));
    }
}

std::uint64_t get_le(std::span<const std::byte> bytes, std::size_t offset, int width) {
    std::uint64_t value = 0;
    for (int i = 0; i < width; ++i) {
        value |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    }
    return value;
}

}  // namespace

FormatError::FormatError(const std::string& what, std::size_t offset)
    : DataError(what + " at byte offset " + std::to_string(offset)), detail_(what), offset_(offset) {}

std::vector<std::byte> encode(std::span<const TimeTagRecord> records, std::uint64_t resolution_ps) {
    if (resolution_ps == 0) throw ConfigError("time-tag resolution must be >= 1 ps");
    std::vector<std::byte> out;
    out.reserve(kHeaderSize + kRecordSize * records.size());
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_le(out, kVersion, 2);
    put_le(out, 0, 2);
    put_le(out, resolution_ps, 8);
    for (const auto& rec : records) {
        if (rec.timestamp < 0) throw ConfigError("negative timestamp cannot be encoded");
        if (rec.timestamp % static_cast<Picoseconds>(resolution_ps) != 0) {
            throw ConfigError("timestamp is not a multiple of the file resolution");
        }
        out.push_back(static_cast<std::byte>(rec.channel));
        put_le(out, static_cast<std::uint64_t>(rec.timestamp) / resolution_ps, 8);
    }
    return out;
}

std::vector<TimeTagRecord> decode(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderSize) throw FormatError("truncated header", 0);
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw FormatError("bad magic (expected BTTG)", 0);
    }
    const auto version = get_le(bytes, 4, 2);
    if (version != kVersion) {
        throw FormatError("unsupported format version " + std::to_string(version), 4);
    }
    const auto resolution = get_le(bytes, 8, 8);
    if (resolution == 0) throw FormatError("zero timestamp resolution", 8);

    const std::size_t body = bytes.size() - kHeaderSize;
    const std::size_t n = body / kRecordSize;
    std::vector<TimeTagRecord> records;
    records.reserve(n);
    std::array<Picoseconds, 2> last = {0, 0};
    constexpr auto kMaxTicks = static_cast<std::uint64_t>(std::numeric_limits<Picoseconds>::max());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t offset = kHeaderSize + i * kRecordSize;
        const auto channel = static_cast<std::uint8_t>(bytes[offset]);
        if (channel > 1) {
            throw FormatError("invalid channel byte " + std::to_string(channel), offset);
        }
        const auto ticks = get_le(bytes, offset + 1, 8);
        if (ticks > kMaxTicks / resolution) throw FormatError("timestamp overflow", offset);
        const auto ts = static_cast<Picoseconds>(ticks * resolution);
        if (ts < last[channel]) {
            throw FormatError("timestamp decreases within channel", offset);
        }
        last[channel] = ts;
        records.push_back({static_cast<Channel>(channel), ts});
    }
    if (body % kRecordSize != 0) {
        throw FormatError("truncated record", kHeaderSize + n * kRecordSize);
    }
    return records;
}

std::vector<TimeTagRecord> to_records(const TimeTagStream& stream) {
    std::vector<TimeTagRecord> out;
    out.reserve(stream.size());
    for (auto ts : stream.timestamps) out.push_back({stream.channel, ts});
    return out;
}

StreamPair split_channels(std::span<const TimeTagRecord> records, double acquisition_time) {
    StreamPair pair;
    pair.a.channel = Channel::A;
    pair.b.channel = Channel::B;
    pair.a.acquisition_time = acquisition_time;
    pair.b.acquisition_time = acquisition_time;
    for (const auto& rec : records) {
        (rec.channel == Channel::A ? pair.a : pair.b).timestamps.push_back(rec.timestamp);
    }
    return pair;
}

void write_file(const std::filesystem::path& path, const TimeTagStream& stream) {
    const auto records = to_records(stream);
    const auto bytes = encode(records);
    write_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<TimeTagRecord> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open time-tag file " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode(std::as_bytes(std::span<const char>(raw)));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

}  // namespace bttg
}  // namespace biphoton
