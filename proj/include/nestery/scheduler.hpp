#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nestery/command.hpp"
#include "nestery/inventory.hpp"
#include "nestery/journal.hpp"

namespace nestery {

// ---- Admission control ----------------------------------------------------
//
// All capacity arithmetic runs against one Inventory under the owning node's
// lock, so an admit() followed by the caller's commit is atomic.

struct Admission {
  bool granted = false;
  std::optional<Dimension> denied;  // first short dimension, cores→ram→disk→nics
};

// Σ consumables of active (RUNNING or SCHEDULED) children, plus volume sizes
// on the disk dimension.
ResourceVector allocated_on(const Inventory& inv, const std::string& host_id);

// capacity − allocated; cpu_priority reported as the host's own priority.
ResourceVector free_capacity(const Inventory& inv, const std::string& host_id);

Admission admit(const Inventory& inv, const std::string& host_id, const ResourceVector& request);

// Allocated cores / capacity cores.
double core_utilization(const Inventory& inv, const std::string& host_id);

// First violated hierarchical capacity or disk conservation invariant, or
// nullopt. Used by property tests and the status self-check.
std::optional<std::string> capacity_violation(const Inventory& inv);

// ---- Future allocations ---------------------------------------------------

enum class AllocationState { Waiting, Active, Completed, Cancelled };

std::string_view allocation_state_name(AllocationState s);

struct ScheduledAllocation {
  std::int64_t id = 0;
  VmDefinition definition;
  std::string parent{kRootHostId};
  std::string owner;
  std::string idempotency_key;
  Seconds start_time = 0;
  Seconds duration_s = 0;
  AllocationState state = AllocationState::Waiting;
  std::string reason;  // why a CANCELLED allocation was not admitted

  std::string launch_key() const { return "alloc-" + std::to_string(id) + "-launch"; }
  std::string stop_key() const { return "alloc-" + std::to_string(id) + "-stop"; }
};

Json allocation_to_json(const ScheduledAllocation& a);
ScheduledAllocation allocation_from_json(const Json& j);

struct Emission {
  Command command;
  std::string idempotency_key;
};

// Activates and retires allocations scheduled at a future time. Capacity is
// not reserved while WAITING; admission happens at the activating tick, which
// creates the VM record in SCHEDULED state so it holds capacity until the
// emitted Launch runs it.
class AllocationScheduler {
 public:
  // `journal` may be null for purely in-memory use.
  AllocationScheduler(Inventory& inventory, Journal* journal);

  // Idempotent per idempotency key: a repeated call returns the existing
  // allocation. Throws StartInPast, InvalidDuration or the definition's
  // invariant errors.
  ScheduledAllocation schedule_future(const VmDefinition& def, const std::string& parent, const std::string& owner,
                                      Seconds start, Seconds duration_s, Seconds now,
                                      const std::string& idempotency_key = {});

  // Emits Launch for each due WAITING allocation that is admitted (earliest
  // scheduled first) and Stop for each ACTIVE one whose window has ended.
  // Activation and expiry are inclusive. Throws ClockWentBackwards.
  std::vector<Emission> tick(Seconds now);

  // Replays one kind-4 record.
  void apply_record(const JournalRecord& record);

  // Launch/Stop commands implied by allocation state, for re-emission after a
  // crash between journaling a transition and enqueuing its command.
  std::vector<Emission> implied_emissions() const;

  const std::map<std::int64_t, ScheduledAllocation>& allocations() const { return allocations_; }
  const ScheduledAllocation& allocation(std::int64_t id) const;
  std::optional<Seconds> last_tick() const { return last_tick_; }

 private:
  void persist_and_apply(const ScheduledAllocation& a);
  void apply(const ScheduledAllocation& a);
  std::optional<std::string> activation_blocker(const ScheduledAllocation& a) const;

  Inventory& inventory_;
  Journal* journal_;
  std::map<std::int64_t, ScheduledAllocation> allocations_;
  std::int64_t next_id_ = 1;
  std::optional<Seconds> last_tick_;
};

}  // namespace nestery
