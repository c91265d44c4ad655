#include "nestery/journal.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nestery/error.hpp"

namespace nestery {

namespace {

constexpr std::uint32_t kMaxPayload = 64u << 20;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

std::uint32_t checksum(std::uint8_t kind, std::string_view payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, &kind, 1);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  return static_cast<std::uint32_t>(crc);
}

bool known_kind(std::uint8_t k) { return k >= 1 && k <= 7; }

}  // namespace

std::string encode_record(RecordKind kind, std::string_view payload) {
  std::string out;
  out.reserve(payload.size() + 9);
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out += static_cast<char>(kind);
  out += payload;
  put_u32(out, checksum(static_cast<std::uint8_t>(kind), payload));
  return out;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::StorageFailure, path_.string() + ": " + std::strerror(errno));
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

ReplayResult Journal::read_all() const {
  std::lock_guard lock(mu_);
  ReplayResult result;
  std::ifstream in(path_, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  while (pos < data.size()) {
    if (data.size() - pos < 9) {
      result.corrupt_offset = pos;
      break;
    }
    std::uint32_t len = get_u32(data, pos);
    auto kind = static_cast<std::uint8_t>(data[pos + 4]);
    if (len > kMaxPayload || data.size() - pos < 9ull + len || !known_kind(kind)) {
      result.corrupt_offset = pos;
      break;
    }
    std::string_view payload(data.data() + pos + 5, len);
    if (get_u32(data, pos + 5 + len) != checksum(kind, payload)) {
      result.corrupt_offset = pos;
      break;
    }
    result.records.push_back(JournalRecord{static_cast<RecordKind>(kind), std::string(payload), pos});
    pos += 9 + len;
  }
  result.valid_bytes = result.corrupt_offset.value_or(data.size());
  return result;
}

void Journal::truncate_to(std::uint64_t offset) {
  std::lock_guard lock(mu_);
  if (::ftruncate(fd_, static_cast<off_t>(offset)) != 0) {
    throw Error(ErrorCode::StorageFailure, std::string("truncate: ") + std::strerror(errno));
  }
}

void Journal::write_all(const std::string& bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::StorageFailure, std::string("write: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

void Journal::append(RecordKind kind, std::string_view payload) {
  std::string bytes = encode_record(kind, payload);
  std::lock_guard lock(mu_);
  if (crashed_) throw Error(ErrorCode::StorageFailure, "journal unavailable");
  if (crash_countdown_) {
    if (*crash_countdown_ == 0) {
      crashed_ = true;
      if (torn_) write_all(bytes.substr(0, bytes.size() / 2));
      throw Error(ErrorCode::StorageFailure, "injected crash");
    }
    --*crash_countdown_;
  }
  write_all(bytes);
}

void Journal::inject_crash(std::size_t appends_before_crash, bool torn) {
  std::lock_guard lock(mu_);
  crash_countdown_ = appends_before_crash;
  torn_ = torn;
}

bool Journal::crashed() const {
  std::lock_guard lock(mu_);
  return crashed_;
}

PayloadWriter& PayloadWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_ += static_cast<char>((v >> (8 * i)) & 0xff);
  return *this;
}

PayloadWriter& PayloadWriter::i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }

PayloadWriter& PayloadWriter::str(std::string_view s) {
  std::uint32_t n = static_cast<std::uint32_t>(s.size());
  for (int i = 0; i < 4; ++i) out_ += static_cast<char>((n >> (8 * i)) & 0xff);
  out_ += s;
  return *this;
}

std::uint64_t PayloadReader::u64() {
  if (in_.size() - pos_ < 8) throw Error(ErrorCode::CorruptJournal, "short payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

std::int64_t PayloadReader::i64() { return static_cast<std::int64_t>(u64()); }

std::string PayloadReader::str() {
  if (in_.size() - pos_ < 4) throw Error(ErrorCode::CorruptJournal, "short payload");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
  pos_ += 4;
  if (in_.size() - pos_ < n) throw Error(ErrorCode::CorruptJournal, "short payload");
  std::string s(in_.substr(pos_, n));
  pos_ += n;
  return s;
}

}  // namespace nestery
