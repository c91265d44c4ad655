#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nestery {

// Record layout on disk, little-endian:
//   [u32 payload length][u8 kind][payload][u32 crc32(kind || payload)]
enum class RecordKind : std::uint8_t {
  Enqueued = 1,
  Delivered = 2,
  Acked = 3,
  Allocation = 4,
  EffectApplied = 5,
  ClockAdvanced = 6,
  DeadLettered = 7,
};

struct JournalRecord {
  RecordKind kind;
  std::string payload;
  std::uint64_t offset = 0;
};

struct ReplayResult {
  std::vector<JournalRecord> records;
  std::uint64_t valid_bytes = 0;
  std::optional<std::uint64_t> corrupt_offset;  // first bad record, if any
};

std::string encode_record(RecordKind kind, std::string_view payload);

// Append-only log. Appends are serialized internally and reach the OS before
// append() returns.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  ~Journal();

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  const std::filesystem::path& path() const { return path_; }

  // Reads every valid record from the start; stops at the first record with a
  // bad length, unknown kind or checksum mismatch.
  ReplayResult read_all() const;

  // Drops everything from `offset` on, so appends follow the last good record.
  void truncate_to(std::uint64_t offset);

  // Throws StorageFailure if the write fails; the record is then not visible.
  void append(RecordKind kind, std::string_view payload);

  // Fault injection: the append after `appends_before_crash` more successful
  // appends fails. With `torn` set, half of that record reaches the file. Once
  // crashed, every append fails, like a dead process.
  void inject_crash(std::size_t appends_before_crash, bool torn);
  bool crashed() const;

 private:
  void write_all(const std::string& bytes);

  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::optional<std::size_t> crash_countdown_;
  bool torn_ = false;
  bool crashed_ = false;
};

// Little-endian payload codec shared by journal record producers.
class PayloadWriter {
 public:
  PayloadWriter& u64(std::uint64_t v);
  PayloadWriter& i64(std::int64_t v);
  PayloadWriter& str(std::string_view s);
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view in) : in_(in) {}
  std::uint64_t u64();
  std::int64_t i64();
  std::string str();
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace nestery
