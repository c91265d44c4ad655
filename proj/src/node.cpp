#include "nestery/node.hpp"

#include <type_traits>

namespace nestery {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

nlohmann::json CommandResult::to_json() const {
  nlohmann::json j = {{"msg_id", msg_id}, {"idempotency_key", idempotency_key}, {"type", type},
                      {"ok", ok},         {"skipped", skipped},                {"acked", acked}};
  if (error) {
    j["error"] = error_code_name(*error);
    j["detail"] = detail;
  }
  j["result"] = result;
  return j;
}

Node::Node(NodeOptions options)
    : options_(std::move(options)),
      journal_(options_.data_dir / "journal.log"),
      clock_(options_.clock_mode, 0),
      inventory_(options_.root_capacity),
      queue_(journal_, clock_, options_.queue),
      scheduler_(inventory_, &journal_),
      hypervisor_(inventory_, options_.model,
                  options_.store_definitions ? options_.data_dir / "definitions" : std::filesystem::path{}),
      blockstore_(inventory_) {
  options_.root_capacity.validate();
  options_.model.validate();
  std::lock_guard lock(mu_);
  recovery_ = queue_.recover([this](const JournalRecord& r) { replay_record(r); });

  // Our workers died with the previous process; their deliveries are orphaned.
  const std::size_t released = queue_.release_inflight();
  recovery_.inflight -= released;
  recovery_.pending += released;

  // Outbox: a crash between journaling an allocation transition and enqueuing
  // its command leaves the command implied but missing.
  for (const Emission& e : scheduler_.implied_emissions()) {
    if (!queue_.key_enqueued(e.idempotency_key)) queue_.enqueue(e.command, e.idempotency_key);
  }
}

void Node::replay_record(const JournalRecord& record) {
  switch (record.kind) {
    case RecordKind::Allocation:
      scheduler_.apply_record(record);
      break;
    case RecordKind::ClockAdvanced: {
      Seconds t = PayloadReader(record.payload).i64();
      if (t > clock_.now() || clock_.mode() == Clock::Mode::Wall) clock_.advance_to(std::max(t, clock_.now()));
      break;
    }
    case RecordKind::EffectApplied: {
      PayloadReader r(record.payload);
      MsgId id = r.u64();
      std::string key = r.str();
      Seconds applied_at = r.i64();
      auto msg = queue_.message(id);
      if (!msg) throw Error(ErrorCode::CorruptJournal, "effect for unknown message at offset " + std::to_string(record.offset));
      try {
        apply_command(msg->command, applied_at, key, true);
      } catch (const Error& e) {
        throw Error(ErrorCode::CorruptJournal,
                    "effect replay failed at offset " + std::to_string(record.offset) + ": " + e.what());
      }
      break;
    }
    default:
      break;
  }
}

void Node::check_usable() const {
  if (poisoned_) throw Error(ErrorCode::StorageFailure, "node must be reopened after a storage failure");
}

MsgId Node::submit(const Command& command, const std::string& idempotency_key) {
  std::lock_guard lock(mu_);
  check_usable();
  return queue_.enqueue(command, idempotency_key);
}

nlohmann::json Node::apply_command(const Command& command, Seconds now, const std::string& key, bool replay) {
  return std::visit(
      Overloaded{
          [&](const cmd::Launch& c) -> nlohmann::json {
            return record_to_json(hypervisor_.launch(c.definition, c.parent, c.owner, now));
          },
          [&](const cmd::Start& c) -> nlohmann::json { return record_to_json(hypervisor_.start(c.uuid, now)); },
          [&](const cmd::Stop& c) -> nlohmann::json {
            auto stopped = hypervisor_.stop(c.uuid, now);
            nlohmann::json j = record_to_json(stopped.back());
            j["cascade"] = nlohmann::json::array();
            for (const auto& rec : stopped) j["cascade"].push_back(rec.definition.uuid.hex());
            return j;
          },
          [&](const cmd::Rescale& c) -> nlohmann::json {
            return record_to_json(hypervisor_.rescale(c.uuid, c.resources));
          },
          [&](const cmd::ScheduleAllocation& c) -> nlohmann::json {
            // Replay restores allocations from their own journal records.
            if (replay) return nullptr;
            return allocation_to_json(
                scheduler_.schedule_future(c.definition, c.parent, c.owner, c.start_time, c.duration_s, now, key));
          },
          [&](const cmd::Status&) -> nlohmann::json { return replay ? nlohmann::json() : status_locked(); },
          [&](const cmd::VolumeCreate& c) -> nlohmann::json {
            return volume_to_json(blockstore_.create_volume(c.host, c.size_gib));
          },
          [&](const cmd::VolumeResize& c) -> nlohmann::json {
            return volume_to_json(blockstore_.resize_volume(c.volume_id, c.size_gib));
          },
          [&](const cmd::VolumeDelete& c) -> nlohmann::json {
            blockstore_.delete_volume(c.volume_id);
            return {{"volume_id", c.volume_id}, {"deleted", true}};
          },
          [&](const cmd::VolumeAttach& c) -> nlohmann::json {
            return volume_to_json(blockstore_.attach_volume(c.volume_id, c.vm));
          },
          [&](const cmd::VolumeDetach& c) -> nlohmann::json {
            return volume_to_json(blockstore_.detach_volume(c.volume_id));
          },
          [&](const cmd::SnapshotCreate& c) -> nlohmann::json {
            StoredObject obj = blockstore_.snapshot_instance(c.vm, c.volume_id, now);
            return {{"name", obj.name}, {"size_gib", obj.size_gib}, {"volume_id", c.volume_id}};
          },
      },
      command);
}

nlohmann::json Node::current_view(const Command& command) const {
  auto vm = [&](const Uuid& u) -> nlohmann::json {
    const VmRecord* rec = inventory_.find_record(u);
    return rec ? record_to_json(*rec) : nlohmann::json();
  };
  return std::visit(Overloaded{
                        [&](const cmd::Launch& c) { return vm(c.definition.uuid); },
                        [&](const cmd::Start& c) { return vm(c.uuid); },
                        [&](const cmd::Stop& c) { return vm(c.uuid); },
                        [&](const cmd::Rescale& c) { return vm(c.uuid); },
                        [&](const auto&) { return nlohmann::json(); },
                    },
                    command);
}

CommandResult Node::handle(const QueueMessage& msg) {
  std::lock_guard lock(mu_);
  check_usable();
  CommandResult r;
  r.msg_id = msg.msg_id;
  r.idempotency_key = msg.idempotency_key;
  r.type = std::string(command_type(msg.command));
  try {
    if (std::holds_alternative<cmd::Status>(msg.command)) {
      r.result = status_locked();
    } else {
      const Seconds now = clock_.now();
      nlohmann::json out;
      EffectOutcome outcome = queue_.dedupe_effect(msg.idempotency_key, msg.msg_id, [&] {
        out = apply_command(msg.command, now, msg.idempotency_key, false);
      });
      r.skipped = outcome == EffectOutcome::Skipped;
      r.result = r.skipped ? current_view(msg.command) : std::move(out);
    }
    r.ok = true;
  } catch (const Error& e) {
    r.error = e.code();
    r.detail = e.detail();
    if (e.code() == ErrorCode::StorageFailure) {
      // Transient: no ack, so the message is redelivered after its deadline.
      poisoned_ = true;
      results_[r.msg_id] = r;
      return r;
    }
  } catch (const std::exception& e) {
    r.error = ErrorCode::InvariantViolation;
    r.detail = e.what();
  }

  try {
    queue_.ack(msg.msg_id);
    r.acked = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StorageFailure) throw;
    poisoned_ = true;
  }
  results_[r.msg_id] = r;
  return r;
}

std::vector<CommandResult> Node::process_pending(const std::string& worker_id) {
  std::vector<CommandResult> out;
  for (;;) {
    std::lock_guard lock(mu_);
    check_usable();
    auto msg = queue_.receive(worker_id);
    if (!msg) break;
    out.push_back(handle(*msg));
    if (!out.back().acked) break;
  }
  return out;
}

CommandResult Node::execute(const Command& command, const std::string& idempotency_key) {
  std::lock_guard lock(mu_);
  MsgId id = submit(command, idempotency_key);
  process_pending();
  auto it = results_.find(id);
  if (it == results_.end()) throw Error(ErrorCode::StorageFailure, "command " + std::to_string(id) + " not processed");
  return it->second;
}

std::vector<Emission> Node::tick(std::optional<Seconds> now) {
  std::lock_guard lock(mu_);
  check_usable();
  Seconds t = now.value_or(clock_.now());
  clock_.advance_to(t);
  journal_.append(RecordKind::ClockAdvanced, PayloadWriter().i64(t).bytes());
  std::vector<Emission> emitted = scheduler_.tick(t);
  for (const Emission& e : emitted) {
    if (!queue_.key_enqueued(e.idempotency_key)) queue_.enqueue(e.command, e.idempotency_key);
  }
  return emitted;
}

nlohmann::json Node::status_locked() const {
  nlohmann::json j = hypervisor_.status(clock_.now());
  j["volumes"] = nlohmann::json::array();
  for (const auto& [id, v] : inventory_.volumes()) j["volumes"].push_back(volume_to_json(v));
  j["allocations"] = nlohmann::json::array();
  for (const auto& [id, a] : scheduler_.allocations()) j["allocations"].push_back(allocation_to_json(a));
  return j;
}

nlohmann::json Node::status() const {
  std::lock_guard lock(mu_);
  return status_locked();
}

std::optional<CommandResult> Node::result(MsgId id) const {
  std::lock_guard lock(mu_);
  auto it = results_.find(id);
  if (it == results_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Node::message_json(MsgId id) const {
  std::lock_guard lock(mu_);
  auto msg = queue_.message(id);
  if (!msg) throw Error(ErrorCode::UnknownMessage, std::to_string(id));
  nlohmann::json j = {{"msg_id", msg->msg_id},
                      {"idempotency_key", msg->idempotency_key},
                      {"type", command_type(msg->command)},
                      {"state", message_state_name(msg->state)},
                      {"attempts", msg->attempts},
                      {"enqueued_at", msg->enqueued_at},
                      {"command", command_to_json(msg->command)}};
  auto it = results_.find(id);
  if (it != results_.end()) j["outcome"] = it->second.to_json();
  return j;
}

ResourceVector Node::free_capacity(const std::string& host_id) const {
  std::lock_guard lock(mu_);
  return nestery::free_capacity(inventory_, host_id);
}

double Node::core_utilization(const std::string& host_id) const {
  std::lock_guard lock(mu_);
  return nestery::core_utilization(inventory_, host_id);
}

std::optional<VmRecord> Node::find_record(const Uuid& uuid) const {
  std::lock_guard lock(mu_);
  const VmRecord* rec = inventory_.find_record(uuid);
  if (rec == nullptr) return std::nullopt;
  return *rec;
}

std::optional<BlockVolume> Node::find_volume(std::int64_t volume_id) const {
  std::lock_guard lock(mu_);
  auto it = inventory_.volumes().find(volume_id);
  if (it == inventory_.volumes().end()) return std::nullopt;
  return it->second;
}

std::vector<ScheduledAllocation> Node::allocations() const {
  std::lock_guard lock(mu_);
  std::vector<ScheduledAllocation> out;
  for (const auto& [id, a] : scheduler_.allocations()) out.push_back(a);
  return out;
}

std::optional<std::string> Node::capacity_violation() const {
  std::lock_guard lock(mu_);
  return nestery::capacity_violation(inventory_);
}

std::size_t Node::deliverable_count() const {
  std::lock_guard lock(mu_);
  return queue_.deliverable_count();
}

}  // namespace nestery
