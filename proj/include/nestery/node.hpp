#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nestery/blockstore.hpp"
#include "nestery/clock.hpp"
#include "nestery/error.hpp"
#include "nestery/hypersim.hpp"
#include "nestery/inventory.hpp"
#include "nestery/journal.hpp"
#include "nestery/scheduler.hpp"
#include "nestery/task_queue.hpp"

namespace nestery {

// Default L0 machine: a mid-size server.
inline ResourceVector default_root_capacity() { return ResourceVector{64, 1024, 262144, 4096, 16}; }

struct NodeOptions {
  std::filesystem::path data_dir;
  ResourceVector root_capacity = default_root_capacity();
  Clock::Mode clock_mode = Clock::Mode::Simulated;
  QueueOptions queue;
  bench::OverheadModel model;
  bool store_definitions = true;
};

struct CommandResult {
  MsgId msg_id = 0;
  std::string idempotency_key;
  std::string type;
  bool ok = false;
  bool skipped = false;  // effect already applied under this key
  bool acked = false;    // false only for transient failures, which are retried
  std::optional<ErrorCode> error;
  std::string detail;
  nlohmann::json result;

  nlohmann::json to_json() const;
};

// One control-plane node: queue, scheduler, hypervisor and block store over a
// single journal (<data_dir>/journal.log). Everything the node knows is a pure
// function of that journal, so constructing a Node on an existing data
// directory replays it to the same state.
//
// All public methods are thread-safe. A StorageFailure while applying an
// effect leaves memory ahead of the journal, so the node refuses further work
// until it is reopened.
class Node {
 public:
  explicit Node(NodeOptions options);

  const RecoveryReport& recovery() const { return recovery_; }
  const NodeOptions& options() const { return options_; }

  // Journals the command; an empty key gets a unique one.
  MsgId submit(const Command& command, const std::string& idempotency_key = {});

  // Worker loop: delivers and handles messages until none is deliverable or a
  // transient failure stops the worker.
  std::vector<CommandResult> process_pending(const std::string& worker_id = "worker-l0");

  // Handles one delivered message: runs the effect under the queue's dedupe
  // contract, acks on success and on permanent (domain) errors.
  CommandResult handle(const QueueMessage& msg);

  // submit + process_pending, returning the result for this command.
  CommandResult execute(const Command& command, const std::string& idempotency_key = {});

  // Advances the simulated clock to `now` (wall mode: reads the clock), runs
  // the scheduler and enqueues its Launch/Stop commands. Does not drain.
  std::vector<Emission> tick(std::optional<Seconds> now = std::nullopt);

  Seconds now() const { return clock_.now(); }

  nlohmann::json status() const;
  std::optional<CommandResult> result(MsgId id) const;
  nlohmann::json message_json(MsgId id) const;  // throws UnknownMessage

  // Locked snapshots for the market and the gateway.
  ResourceVector free_capacity(const std::string& host_id) const;
  double core_utilization(const std::string& host_id) const;
  std::optional<VmRecord> find_record(const Uuid& uuid) const;
  std::optional<BlockVolume> find_volume(std::int64_t volume_id) const;
  std::vector<ScheduledAllocation> allocations() const;
  std::optional<std::string> capacity_violation() const;
  std::size_t deliverable_count() const;

  // Test access to the journal for fault injection.
  Journal& journal() { return journal_; }

 private:
  nlohmann::json apply_command(const Command& command, Seconds now, const std::string& key, bool replay);
  nlohmann::json current_view(const Command& command) const;
  nlohmann::json status_locked() const;
  void replay_record(const JournalRecord& record);
  void check_usable() const;

  NodeOptions options_;
  Journal journal_;
  Clock clock_;
  Inventory inventory_;
  TaskQueue queue_;
  AllocationScheduler scheduler_;
  Hypervisor hypervisor_;
  BlockStore blockstore_;
  RecoveryReport recovery_;

  mutable std::recursive_mutex mu_;
  std::map<MsgId, CommandResult> results_;
  bool poisoned_ = false;
};

}  // namespace nestery
