#include "nestery/task_queue.hpp"

#include "nestery/error.hpp"

namespace nestery {

std::string_view message_state_name(MessageState s) {
  switch (s) {
    case MessageState::Pending:
      return "PENDING";
    case MessageState::Inflight:
      return "INFLIGHT";
    case MessageState::Acked:
      return "ACKED";
    case MessageState::DeadLettered:
      return "DEAD_LETTERED";
  }
  return "?";
}

TaskQueue::TaskQueue(Journal& journal, Clock& clock, QueueOptions options)
    : journal_(journal), clock_(clock), options_(options) {}

MsgId TaskQueue::enqueue(const Command& command, const std::string& idempotency_key) {
  std::lock_guard lock(mu_);
  QueueMessage m;
  m.msg_id = next_id_;
  m.command = command;
  m.idempotency_key = idempotency_key.empty() ? "msg-" + std::to_string(m.msg_id) : idempotency_key;
  m.enqueued_at = clock_.now();

  PayloadWriter w;
  w.u64(m.msg_id).i64(m.enqueued_at).str(m.idempotency_key).str(command_to_json(command).dump());
  journal_.append(RecordKind::Enqueued, w.bytes());

  ++next_id_;
  open_.insert(m.msg_id);
  enqueued_keys_.insert(m.idempotency_key);
  messages_.emplace(m.msg_id, std::move(m));
  return next_id_ - 1;
}

bool TaskQueue::deliverable(const QueueMessage& m, Seconds now) const {
  if (m.state == MessageState::Pending) return true;
  return m.state == MessageState::Inflight && m.visibility_deadline && now >= *m.visibility_deadline;
}

std::optional<QueueMessage> TaskQueue::receive(const std::string& worker_id, Seconds visibility_timeout_s) {
  if (visibility_timeout_s <= 0) throw Error(ErrorCode::InvalidArgument, "visibility_timeout_s");
  std::lock_guard lock(mu_);
  const Seconds now = clock_.now();
  for (auto it = open_.begin(); it != open_.end();) {
    QueueMessage& m = messages_.at(*it);
    if (!deliverable(m, now)) {
      ++it;
      continue;
    }
    if (m.attempts >= options_.max_attempts) {
      journal_.append(RecordKind::DeadLettered, PayloadWriter().u64(m.msg_id).bytes());
      m.state = MessageState::DeadLettered;
      m.visibility_deadline.reset();
      it = open_.erase(it);
      continue;
    }
    const Seconds deadline = now + visibility_timeout_s;
    journal_.append(RecordKind::Delivered, PayloadWriter().u64(m.msg_id).str(worker_id).i64(deadline).bytes());
    m.state = MessageState::Inflight;
    m.attempts += 1;
    m.visibility_deadline = deadline;
    m.worker_id = worker_id;
    return m;
  }
  return std::nullopt;
}

AckResult TaskQueue::ack(MsgId id) {
  std::lock_guard lock(mu_);
  auto it = messages_.find(id);
  if (it == messages_.end()) throw Error(ErrorCode::UnknownMessage, std::to_string(id));
  QueueMessage& m = it->second;
  if (m.state == MessageState::Acked) return AckResult::AlreadyAcked;
  journal_.append(RecordKind::Acked, PayloadWriter().u64(id).bytes());
  m.state = MessageState::Acked;
  m.visibility_deadline.reset();
  open_.erase(id);
  return AckResult::Acknowledged;
}

EffectOutcome TaskQueue::dedupe_effect(const std::string& idempotency_key, MsgId msg_id,
                                       const std::function<void()>& handler) {
  std::lock_guard lock(effects_mu_);
  if (applied_keys_.count(idempotency_key) != 0) return EffectOutcome::Skipped;
  handler();
  journal_.append(RecordKind::EffectApplied,
                  PayloadWriter().u64(msg_id).str(idempotency_key).i64(clock_.now()).bytes());
  applied_keys_.insert(idempotency_key);
  return EffectOutcome::Applied;
}

bool TaskQueue::effect_applied(const std::string& idempotency_key) const {
  std::lock_guard lock(effects_mu_);
  return applied_keys_.count(idempotency_key) != 0;
}

void TaskQueue::apply_record(const JournalRecord& record) {
  PayloadReader r(record.payload);
  switch (record.kind) {
    case RecordKind::Enqueued: {
      std::lock_guard lock(mu_);
      QueueMessage m;
      m.msg_id = r.u64();
      m.enqueued_at = r.i64();
      m.idempotency_key = r.str();
      m.command = command_from_json(Json::parse(r.str()));
      next_id_ = std::max(next_id_, m.msg_id + 1);
      open_.insert(m.msg_id);
      enqueued_keys_.insert(m.idempotency_key);
      messages_.insert_or_assign(m.msg_id, std::move(m));
      break;
    }
    case RecordKind::Delivered: {
      std::lock_guard lock(mu_);
      MsgId id = r.u64();
      std::string worker = r.str();
      Seconds deadline = r.i64();
      auto it = messages_.find(id);
      if (it == messages_.end()) throw Error(ErrorCode::CorruptJournal, "delivery of unknown message");
      it->second.state = MessageState::Inflight;
      it->second.attempts += 1;
      it->second.visibility_deadline = deadline;
      it->second.worker_id = std::move(worker);
      break;
    }
    case RecordKind::Acked:
    case RecordKind::DeadLettered: {
      std::lock_guard lock(mu_);
      MsgId id = r.u64();
      auto it = messages_.find(id);
      if (it == messages_.end()) throw Error(ErrorCode::CorruptJournal, "terminal record for unknown message");
      it->second.state = record.kind == RecordKind::Acked ? MessageState::Acked : MessageState::DeadLettered;
      it->second.visibility_deadline.reset();
      open_.erase(id);
      break;
    }
    case RecordKind::EffectApplied: {
      r.u64();
      std::lock_guard lock(effects_mu_);
      applied_keys_.insert(r.str());
      break;
    }
    default:
      break;
  }
}

std::size_t TaskQueue::release_inflight() {
  std::lock_guard lock(mu_);
  std::size_t released = 0;
  for (auto& [id, m] : messages_) {
    if (m.state != MessageState::Inflight) continue;
    m.state = MessageState::Pending;
    m.visibility_deadline.reset();
    ++released;
  }
  return released;
}

RecoveryReport TaskQueue::recover(const std::function<void(const JournalRecord&)>& observer) {
  ReplayResult replay = journal_.read_all();
  RecoveryReport report;
  {
    std::lock_guard lock(mu_);
    messages_.clear();
    open_.clear();
    enqueued_keys_.clear();
    next_id_ = 1;
  }
  {
    std::lock_guard lock(effects_mu_);
    applied_keys_.clear();
  }
  for (const auto& rec : replay.records) {
    apply_record(rec);
    if (observer) observer(rec);
    ++report.records_replayed;
  }
  if (replay.corrupt_offset) {
    report.corrupt_offset = replay.corrupt_offset;
    journal_.truncate_to(replay.valid_bytes);
  }

  // Lapsed deliveries are PENDING again; unexpired ones stay INFLIGHT until
  // their deadline passes.
  std::lock_guard lock(mu_);
  const Seconds now = clock_.now();
  for (auto& [id, m] : messages_) {
    if (m.state == MessageState::Inflight && m.visibility_deadline && now >= *m.visibility_deadline) {
      m.state = MessageState::Pending;
      m.visibility_deadline.reset();
    }
    switch (m.state) {
      case MessageState::Pending:
        ++report.pending;
        break;
      case MessageState::Inflight:
        ++report.inflight;
        break;
      case MessageState::Acked:
        ++report.acked;
        break;
      case MessageState::DeadLettered:
        ++report.dead_lettered;
        break;
    }
  }
  return report;
}

std::optional<QueueMessage> TaskQueue::message(MsgId id) const {
  std::lock_guard lock(mu_);
  auto it = messages_.find(id);
  if (it == messages_.end()) return std::nullopt;
  return it->second;
}

std::vector<QueueMessage> TaskQueue::messages() const {
  std::lock_guard lock(mu_);
  std::vector<QueueMessage> out;
  out.reserve(messages_.size());
  for (const auto& [id, m] : messages_) out.push_back(m);
  return out;
}

std::vector<QueueMessage> TaskQueue::dead_letters() const {
  std::lock_guard lock(mu_);
  std::vector<QueueMessage> out;
  for (const auto& [id, m] : messages_) {
    if (m.state == MessageState::DeadLettered) out.push_back(m);
  }
  return out;
}

bool TaskQueue::key_enqueued(const std::string& idempotency_key) const {
  std::lock_guard lock(mu_);
  return enqueued_keys_.count(idempotency_key) != 0;
}

std::size_t TaskQueue::deliverable_count() const {
  std::lock_guard lock(mu_);
  const Seconds now = clock_.now();
  std::size_t n = 0;
  for (MsgId id : open_) {
    if (deliverable(messages_.at(id), now)) ++n;
  }
  return n;
}

}  // namespace nestery
