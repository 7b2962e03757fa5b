#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "biphoton/common.hpp"

namespace biphoton {

enum class Channel : std::uint8_t { A = 0, B = 1 };

struct TimeTagRecord {
    Channel channel = Channel::A;
    Picoseconds timestamp = 0;

    friend bool operator==(const TimeTagRecord&, const TimeTagRecord&) = default;
};

/// Clicks of one detector group, sorted non-decreasing. `acquisition_time`
/// is the effective live time in seconds used for g2 normalization; gating
/// scales it down.
struct TimeTagStream {
    Channel channel = Channel::A;
    double acquisition_time = 0.0;
    std::vector<Picoseconds> timestamps;

    std::size_t size() const { return timestamps.size(); }
    bool is_sorted() const;

    friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;
};

struct StreamPair {
    TimeTagStream a;
    TimeTagStream b;
};

// Binary time-tag format, little-endian throughout:
//
//   header (16 bytes): "BTTG" | u16 version | u16 reserved (0) | u64 resolution_ps
//   records (9 bytes): u8 channel (0 = A, 1 = B) | u64 timestamp
//
// Timestamps are in units of resolution_ps and non-decreasing per channel.
namespace bttg {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kRecordSize = 9;

/// Raised on malformed input; `offset()` is the byte offset of the first bad
/// header field or record.
class FormatError : public DataError {
  public:
    FormatError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }
    const std::string& detail() const { return detail_; }

  private:
    std::string detail_;
    std::size_t offset_;
};

std::vector<std::byte> encode(std::span<const TimeTagRecord> records, std::uint64_t resolution_ps = 1);

/// Parses a buffer and returns records with timestamps converted to
/// picoseconds. Validates header, record size, channel byte and per-channel
/// monotonicity.
std::vector<TimeTagRecord> decode(std::span<const std::byte> bytes);

std::vector<TimeTagRecord> to_records(const TimeTagStream& stream);

/// Splits records by channel. `acquisition_time` is copied to both streams.
StreamPair split_channels(std::span<const TimeTagRecord> records, double acquisition_time);

/// Writes atomically (temporary file + rename).
void write_file(const std::filesystem::path& path, const TimeTagStream& stream);
std::vector<TimeTagRecord> read_file(const std::filesystem::path& path);

}  // namespace bttg

}  // namespace biphoton
