#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "nestery/clock.hpp"
#include "nestery/command.hpp"
#include "nestery/journal.hpp"

namespace nestery {

using MsgId = std::uint64_t;

enum class MessageState { Pending, Inflight, Acked, DeadLettered };

std::string_view message_state_name(MessageState s);

struct QueueMessage {
  MsgId msg_id = 0;
  Command command;
  std::string idempotency_key;
  Seconds enqueued_at = 0;
  int attempts = 0;
  MessageState state = MessageState::Pending;
  std::optional<Seconds> visibility_deadline;
  std::string worker_id;
};

struct QueueOptions {
  Seconds visibility_timeout_s = 30;
  int max_attempts = 5;
};

enum class AckResult { Acknowledged, AlreadyAcked };
enum class EffectOutcome { Applied, Skipped };

struct RecoveryReport {
  std::size_t pending = 0;
  std::size_t inflight = 0;
  std::size_t acked = 0;
  std::size_t dead_lettered = 0;
  std::optional<std::uint64_t> corrupt_offset;  // CorruptJournal(offset)
  std::size_t records_replayed = 0;
};

// Durable FIFO command queue with at-least-once delivery. Every state change
// is journaled before it becomes visible; the in-memory view is a pure
// function of the journal, so recover() after a crash reproduces it.
class TaskQueue {
 public:
  TaskQueue(Journal& journal, Clock& clock, QueueOptions options = {});

  // An empty key becomes "msg-<id>", unique to this message.
  MsgId enqueue(const Command& command, const std::string& idempotency_key);

  // Delivers the oldest deliverable message: PENDING, or INFLIGHT with a
  // lapsed deadline. Messages that have used up max_attempts move to the
  // dead-letter list instead.
  std::optional<QueueMessage> receive(const std::string& worker_id, Seconds visibility_timeout_s);
  std::optional<QueueMessage> receive(const std::string& worker_id) {
    return receive(worker_id, options_.visibility_timeout_s);
  }

  // Throws UnknownMessage. A second ack reports AlreadyAcked.
  AckResult ack(MsgId id);

  // Runs `handler` at most once per idempotency key across redeliveries and
  // restarts. The key is journaled only after the handler returns; if the
  // handler throws, nothing is recorded.
  EffectOutcome dedupe_effect(const std::string& idempotency_key, MsgId msg_id,
                              const std::function<void()>& handler);
  bool effect_applied(const std::string& idempotency_key) const;

  // Startup only: rebuilds state from the journal and truncates a torn or
  // corrupt tail so later appends stay readable. `observer` sees every valid
  // record after the queue has applied it, so owners sharing the journal can
  // rebuild their own state in the same pass.
  RecoveryReport recover(const std::function<void(const JournalRecord&)>& observer = {});

  // Startup only: returns every INFLIGHT message to PENDING. For owners whose
  // workers lived in the previous process, so no one still holds a delivery.
  std::size_t release_inflight();

  // Applies one journal record (kinds 1, 2, 3, 5, 7; others are ignored). Used
  // by recover() and by owners that replay a shared journal.
  void apply_record(const JournalRecord& record);

  std::optional<QueueMessage> message(MsgId id) const;
  std::vector<QueueMessage> messages() const;
  std::vector<QueueMessage> dead_letters() const;
  bool key_enqueued(const std::string& idempotency_key) const;
  std::size_t deliverable_count() const;

  const QueueOptions& options() const { return options_; }

 private:
  bool deliverable(const QueueMessage& m, Seconds now) const;

  Journal& journal_;
  Clock& clock_;
  QueueOptions options_;

  mutable std::mutex mu_;
  std::map<MsgId, QueueMessage> messages_;
  std::set<MsgId> open_;  // not ACKED and not dead-lettered
  std::unordered_set<std::string> enqueued_keys_;
  MsgId next_id_ = 1;

  mutable std::mutex effects_mu_;
  std::unordered_set<std::string> applied_keys_;
};

}  // namespace nestery
