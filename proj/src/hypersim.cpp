#include "nestery/hypersim.hpp"

#include <fstream>

#include "nestery/command.hpp"
#include "nestery/definition_doc.hpp"
#include "nestery/error.hpp"
#include "nestery/scheduler.hpp"

namespace nestery {

SimMachine sim_machine(const VmRecord& rec, const bench::OverheadModel& model) {
  SimMachine m;
  m.uuid = rec.definition.uuid;
  m.level = rec.definition.level;
  m.effective_service_factor = model.factor(m.level);
  m.boot_latency_ms = m.level == 1 ? kL1BootLatencyMs : kL1BootLatencyMs * model.factor_l2;
  return m;
}

Hypervisor::Hypervisor(Inventory& inventory, bench::OverheadModel model, std::filesystem::path definition_store)
    : inventory_(inventory), model_(model), definition_store_(std::move(definition_store)) {}

void Hypervisor::check_parent_running(const std::string& parent) const {
  const HostNode& host = inventory_.host(parent);
  if (host.level == 0) return;
  const VmRecord& p = inventory_.record(Uuid::parse(parent));
  if (p.state != VmState::Running) {
    throw Error(ErrorCode::IllegalState, "parent " + std::string(vm_state_name(p.state)));
  }
}

VmRecord Hypervisor::launch(const VmDefinition& def, const std::string& parent, const std::string& owner,
                            Seconds now) {
  def.validate();
  if (def.image_ref.empty()) throw Error(ErrorCode::InvariantViolation, "image_ref");
  const HostNode* host = inventory_.find_host(parent);
  if (host == nullptr) throw Error(ErrorCode::UnknownVm, parent);
  if (host->level + 1 > kMaxNestingLevel) throw Error(ErrorCode::NestingDepthExceeded, parent);
  if (def.level != host->level + 1) throw Error(ErrorCode::InvariantViolation, "level");
  check_parent_running(parent);

  if (VmRecord* existing = inventory_.find_record(def.uuid) ? &inventory_.record(def.uuid) : nullptr) {
    // The scheduler's reservation already holds the capacity.
    if (existing->state == VmState::Scheduled && existing->definition == def && existing->parent == parent) {
      existing->transition(VmState::Running);
      existing->started_at = now;
      store_definition(*existing);
      return *existing;
    }
    throw Error(ErrorCode::DuplicateUuid, def.uuid.hex());
  }

  Admission adm = admit(inventory_, parent, def.resources);
  if (!adm.granted) throw Error(ErrorCode::AdmissionDenied, std::string(dimension_name(*adm.denied)));

  VmRecord rec;
  rec.definition = def;
  rec.parent = parent;
  rec.owner = owner;
  rec.transition(VmState::Running);
  rec.started_at = now;
  if (def.level == 1) inventory_.add_host(HostNode{def.uuid.hex(), 1, def.resources, {}});
  inventory_.host(parent).children.insert(def.uuid);
  store_definition(rec);
  return inventory_.add_record(std::move(rec));
}

VmRecord Hypervisor::start(const Uuid& uuid, Seconds now) {
  VmRecord& rec = inventory_.record(uuid);
  if (rec.state != VmState::Stopped && rec.state != VmState::Scheduled) {
    throw Error(ErrorCode::IllegalState, std::string(vm_state_name(rec.state)));
  }
  check_parent_running(rec.parent);
  if (rec.state == VmState::Stopped) {
    Admission adm = admit(inventory_, rec.parent, rec.definition.resources);
    if (!adm.granted) throw Error(ErrorCode::AdmissionDenied, std::string(dimension_name(*adm.denied)));
  }
  rec.transition(VmState::Running);
  rec.started_at = now;
  rec.stopped_at.reset();
  return rec;
}

std::vector<VmRecord> Hypervisor::stop(const Uuid& uuid, Seconds now) {
  VmRecord& rec = inventory_.record(uuid);
  if (!rec.active()) throw Error(ErrorCode::IllegalState, std::string(vm_state_name(rec.state)));

  std::vector<VmRecord> stopped;
  if (const HostNode* host = inventory_.find_host(uuid.hex())) {
    for (const Uuid& child : host->children) {
      VmRecord& c = inventory_.record(child);
      if (!c.active()) continue;
      c.transition(VmState::Stopped);
      c.stopped_at = now;
      stopped.push_back(c);
    }
  }
  rec.transition(VmState::Stopped);
  rec.stopped_at = now;
  stopped.push_back(rec);
  return stopped;
}

VmRecord Hypervisor::rescale(const Uuid& uuid, const ResourceVector& resources) {
  resources.validate();
  VmRecord& rec = inventory_.record(uuid);
  if (rec.state != VmState::Running) throw Error(ErrorCode::IllegalState, std::string(vm_state_name(rec.state)));

  HostNode* own_host = inventory_.find_host(uuid.hex()) ? &inventory_.host(uuid.hex()) : nullptr;
  if (own_host != nullptr) {
    ResourceVector used = allocated_on(inventory_, own_host->node_id);
    for (Dimension d : kConsumableDimensions) {
      if (resources.get(d) < used.get(d)) throw Error(ErrorCode::ShrinkBelowChildUsage, std::string(dimension_name(d)));
    }
  }
  ResourceVector free = free_capacity(inventory_, rec.parent);
  for (Dimension d : kConsumableDimensions) {
    if (resources.get(d) - rec.definition.resources.get(d) > free.get(d)) {
      throw Error(ErrorCode::AdmissionDenied, std::string(dimension_name(d)));
    }
  }

  rec.transition(VmState::Running);
  rec.definition.resources = resources;
  if (own_host != nullptr) own_host->capacity = resources;
  store_definition(rec);
  return rec;
}

void Hypervisor::store_definition(const VmRecord& rec) const {
  if (definition_store_.empty()) return;
  std::filesystem::path dir = definition_store_ / rec.parent;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(dir / (rec.definition.uuid.hex() + ".xml"), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::StorageFailure, (dir / rec.definition.uuid.hex()).string());
  out << serialize_definition(rec.definition);
}

nlohmann::json record_to_json(const VmRecord& rec) {
  return {
      {"uuid", rec.definition.uuid.hex()},
      {"name", rec.definition.name},
      {"level", rec.definition.level},
      {"state", vm_state_name(rec.state)},
      {"resources", resources_to_json(rec.definition.resources)},
      {"image_ref", rec.definition.image_ref},
      {"parent", rec.parent},
      {"owner", rec.owner},
      {"started_at", rec.started_at ? nlohmann::json(*rec.started_at) : nlohmann::json()},
      {"stopped_at", rec.stopped_at ? nlohmann::json(*rec.stopped_at) : nlohmann::json()},
  };
}

nlohmann::json Hypervisor::vm_json(const VmRecord& rec, Seconds now) const {
  SimMachine m = sim_machine(rec, model_);
  nlohmann::json j = record_to_json(rec);
  j["uptime_s"] = rec.state == VmState::Running && rec.started_at ? now - *rec.started_at : 0;
  j["service_factor"] = m.effective_service_factor;
  j["boot_latency_ms"] = m.boot_latency_ms;
  if (const HostNode* host = inventory_.find_host(rec.definition.uuid.hex())) j["host"] = host_json(*host, now);
  return j;
}

nlohmann::json Hypervisor::host_json(const HostNode& host, Seconds now) const {
  nlohmann::json vms = nlohmann::json::array();
  for (const Uuid& child : host.children) vms.push_back(vm_json(inventory_.record(child), now));
  return {
      {"node_id", host.node_id},
      {"level", host.level},
      {"capacity", resources_to_json(host.capacity)},
      {"free", resources_to_json(free_capacity(inventory_, host.node_id))},
      {"core_utilization", core_utilization(inventory_, host.node_id)},
      {"vms", std::move(vms)},
  };
}

nlohmann::json Hypervisor::status(Seconds now) const {
  return {{"now", now}, {"vm_count", inventory_.records().size()}, {"root", host_json(inventory_.host(std::string(kRootHostId)), now)}};
}

}  // namespace nestery
