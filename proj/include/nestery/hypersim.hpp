#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nestery/inventory.hpp"
#include "nestery/perfbench.hpp"

namespace nestery {

// The performance view of a VM: how much slower its guest runs than bare
// metal and how long a boot takes in the simulation.
struct SimMachine {
  Uuid uuid;
  int level = 1;
  double effective_service_factor = 1.0;
  double boot_latency_ms = 0.0;
};

inline constexpr double kL1BootLatencyMs = 500.0;

// Factors are relative to L0, so an L2 guest's factor already contains the
// L1 layer underneath it.
SimMachine sim_machine(const VmRecord& rec, const bench::OverheadModel& model);

// Flat record view: definition fields, state, parent, owner and timestamps.
nlohmann::json record_to_json(const VmRecord& rec);

// The simulated nested hypervisor. Every operation validates completely before
// it mutates anything, so a thrown Error leaves the inventory untouched.
class Hypervisor {
 public:
  // An empty `definition_store` disables writing definition documents.
  Hypervisor(Inventory& inventory, bench::OverheadModel model, std::filesystem::path definition_store = {});

  // Launches `def` on `parent`. A SCHEDULED record with the same definition
  // (a reservation made by the scheduler) is activated instead. Throws
  // AdmissionDenied(dim), DuplicateUuid, NestingDepthExceeded, UnknownVm
  // (parent), IllegalState (parent L1 not RUNNING), InvariantViolation.
  VmRecord launch(const VmDefinition& def, const std::string& parent, const std::string& owner, Seconds now);

  // STOPPED → RUNNING after re-admission; SCHEDULED → RUNNING on its
  // reservation.
  VmRecord start(const Uuid& uuid, Seconds now);

  // Stops the VM and, for an L1 host, its active children first. Returns the
  // stopped records in the order they stopped; the target is last.
  std::vector<VmRecord> stop(const Uuid& uuid, Seconds now);

  // Replaces the resource vector atomically. For an L1 host the capacity
  // follows, and shrinking below current child usage is rejected.
  VmRecord rescale(const Uuid& uuid, const ResourceVector& resources);

  // Host tree rooted at "l0" with per-host capacity and free vectors and
  // per-VM state, resources, level and uptime.
  nlohmann::json status(Seconds now) const;

  const bench::OverheadModel& model() const { return model_; }

 private:
  void store_definition(const VmRecord& rec) const;
  void check_parent_running(const std::string& parent) const;
  nlohmann::json host_json(const HostNode& host, Seconds now) const;
  nlohmann::json vm_json(const VmRecord& rec, Seconds now) const;

  Inventory& inventory_;
  bench::OverheadModel model_;
  std::filesystem::path definition_store_;
};

}  // namespace nestery
