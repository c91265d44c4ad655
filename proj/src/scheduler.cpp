#include "nestery/scheduler.hpp"

#include <algorithm>

#include "nestery/error.hpp"

namespace nestery {

ResourceVector allocated_on(const Inventory& inv, const std::string& host_id) {
  const HostNode& host = inv.host(host_id);
  ResourceVector used{0, host.capacity.cpu_priority, 0, 0, 0};
  for (const Uuid& child : host.children) {
    const VmRecord& rec = inv.record(child);
    if (rec.active()) used = add_consumables(used, rec.definition.resources);
  }
  used.disk_gib += inv.volume_disk_on(host_id);
  return used;
}

ResourceVector free_capacity(const Inventory& inv, const std::string& host_id) {
  const HostNode& host = inv.host(host_id);
  ResourceVector free = sub_consumables(host.capacity, allocated_on(inv, host_id));
  free.cpu_priority = host.capacity.cpu_priority;
  return free;
}

Admission admit(const Inventory& inv, const std::string& host_id, const ResourceVector& request) {
  auto shortfall = first_shortfall(request, free_capacity(inv, host_id));
  return Admission{!shortfall.has_value(), shortfall};
}

double core_utilization(const Inventory& inv, const std::string& host_id) {
  const HostNode& host = inv.host(host_id);
  if (host.capacity.cpu_cores <= 0) return 0.0;
  return static_cast<double>(allocated_on(inv, host_id).cpu_cores) / static_cast<double>(host.capacity.cpu_cores);
}

std::optional<std::string> capacity_violation(const Inventory& inv) {
  for (const auto& [id, host] : inv.hosts()) {
    ResourceVector used = allocated_on(inv, id);
    for (auto d : kConsumableDimensions) {
      if (used.get(d) > host.capacity.get(d)) {
        return "host " + id + " over capacity on " + std::string(dimension_name(d));
      }
    }
    // Disk conservation: capacity = free + Σ volumes + Σ active VM disks.
    std::int64_t volumes = 0;
    for (const auto& [vid, vol] : inv.volumes()) {
      if (vol.host == id) volumes += vol.size_gib;
    }
    std::int64_t vm_disk = 0;
    for (const Uuid& child : host.children) {
      const VmRecord& rec = inv.record(child);
      if (rec.active()) vm_disk += rec.definition.resources.disk_gib;
    }
    if (host.capacity.disk_gib != free_capacity(inv, id).disk_gib + volumes + vm_disk) {
      return "host " + id + " disk not conserved";
    }
    if (host.level == 1) {
      const VmRecord& self = inv.record(Uuid::parse(id));
      if (!(self.definition.resources == host.capacity)) return "host " + id + " capacity differs from its definition";
    }
  }
  for (const auto& [uuid, rec] : inv.records()) {
    if (rec.state == VmState::Running && rec.definition.level == 2) {
      const VmRecord* parent = inv.find_record(Uuid::parse(rec.parent));
      if (parent == nullptr || parent->state != VmState::Running) {
        return "running L2 " + uuid.hex() + " under non-running parent";
      }
    }
  }
  for (const auto& [vid, vol] : inv.volumes()) {
    std::int64_t sum = 0;
    for (const auto& obj : vol.contents) sum += obj.size_gib;
    if (sum != vol.used_gib || vol.used_gib > vol.size_gib) return "volume " + std::to_string(vid) + " usage";
  }
  return std::nullopt;
}

std::string_view allocation_state_name(AllocationState s) {
  switch (s) {
    case AllocationState::Waiting:
      return "WAITING";
    case AllocationState::Active:
      return "ACTIVE";
    case AllocationState::Completed:
      return "COMPLETED";
    case AllocationState::Cancelled:
      return "CANCELLED";
  }
  return "?";
}

Json allocation_to_json(const ScheduledAllocation& a) {
  return Json{{"id", a.id},
              {"definition", definition_to_json(a.definition)},
              {"parent", a.parent},
              {"owner", a.owner},
              {"idempotency_key", a.idempotency_key},
              {"start_time", a.start_time},
              {"duration_s", a.duration_s},
              {"state", std::string(allocation_state_name(a.state))},
              {"reason", a.reason}};
}

ScheduledAllocation allocation_from_json(const Json& j) {
  ScheduledAllocation a;
  a.id = j.at("id").get<std::int64_t>();
  a.definition = definition_from_json(j.at("definition"));
  a.parent = j.at("parent").get<std::string>();
  a.owner = j.at("owner").get<std::string>();
  a.idempotency_key = j.at("idempotency_key").get<std::string>();
  a.start_time = j.at("start_time").get<Seconds>();
  a.duration_s = j.at("duration_s").get<Seconds>();
  a.reason = j.at("reason").get<std::string>();
  const auto state = j.at("state").get<std::string>();
  for (auto s : {AllocationState::Waiting, AllocationState::Active, AllocationState::Completed,
                 AllocationState::Cancelled}) {
    if (allocation_state_name(s) == state) a.state = s;
  }
  return a;
}

AllocationScheduler::AllocationScheduler(Inventory& inventory, Journal* journal)
    : inventory_(inventory), journal_(journal) {}

ScheduledAllocation AllocationScheduler::schedule_future(const VmDefinition& def, const std::string& parent,
                                                         const std::string& owner, Seconds start, Seconds duration_s,
                                                         Seconds now, const std::string& idempotency_key) {
  if (!idempotency_key.empty()) {
    for (const auto& [id, a] : allocations_) {
      if (a.idempotency_key == idempotency_key) return a;
    }
  }
  if (start < now) throw Error(ErrorCode::StartInPast, std::to_string(start) + " < " + std::to_string(now));
  if (duration_s <= 0) throw Error(ErrorCode::InvalidDuration, std::to_string(duration_s));
  def.validate();

  ScheduledAllocation a;
  a.id = next_id_;
  a.definition = def;
  a.parent = parent;
  a.owner = owner;
  a.idempotency_key = idempotency_key;
  a.start_time = start;
  a.duration_s = duration_s;
  persist_and_apply(a);
  return a;
}

std::optional<std::string> AllocationScheduler::activation_blocker(const ScheduledAllocation& a) const {
  const HostNode* host = inventory_.find_host(a.parent);
  if (host == nullptr) return "UnknownVm(" + a.parent + ")";
  if (host->level + 1 != a.definition.level) return "NestingDepthExceeded";
  if (host->level == 1 && inventory_.record(Uuid::parse(a.parent)).state != VmState::Running) {
    return "IllegalState(parent not RUNNING)";
  }
  if (inventory_.find_record(a.definition.uuid) != nullptr) return "DuplicateUuid";
  Admission adm = admit(inventory_, a.parent, a.definition.resources);
  if (!adm.granted) return "AdmissionDenied(" + std::string(dimension_name(*adm.denied)) + ")";
  return std::nullopt;
}

std::vector<Emission> AllocationScheduler::tick(Seconds now) {
  if (last_tick_ && now < *last_tick_) {
    throw Error(ErrorCode::ClockWentBackwards, std::to_string(now) + " < " + std::to_string(*last_tick_));
  }
  last_tick_ = now;
  std::vector<Emission> out;

  // allocations_ is keyed by id, i.e. by scheduling order.
  for (auto& [id, a] : allocations_) {
    if (a.state != AllocationState::Waiting || a.start_time > now) continue;
    ScheduledAllocation next = a;
    if (auto blocker = activation_blocker(a)) {
      next.state = AllocationState::Cancelled;
      next.reason = *blocker;
      persist_and_apply(next);
      continue;
    }
    next.state = AllocationState::Active;
    persist_and_apply(next);
    out.push_back(Emission{cmd::Launch{a.definition, a.parent, a.owner}, a.launch_key()});
  }
  for (auto& [id, a] : allocations_) {
    if (a.state != AllocationState::Active || a.start_time + a.duration_s > now) continue;
    ScheduledAllocation next = a;
    next.state = AllocationState::Completed;
    persist_and_apply(next);
    out.push_back(Emission{cmd::Stop{a.definition.uuid}, a.stop_key()});
  }
  return out;
}

void AllocationScheduler::persist_and_apply(const ScheduledAllocation& a) {
  if (journal_ != nullptr) journal_->append(RecordKind::Allocation, allocation_to_json(a).dump());
  apply(a);
}

void AllocationScheduler::apply(const ScheduledAllocation& a) {
  auto it = allocations_.find(a.id);
  const bool activating =
      a.state == AllocationState::Active && (it == allocations_.end() || it->second.state != AllocationState::Active);
  allocations_.insert_or_assign(a.id, a);
  next_id_ = std::max(next_id_, a.id + 1);

  if (activating && inventory_.find_record(a.definition.uuid) == nullptr) {
    VmRecord rec;
    rec.definition = a.definition;
    rec.parent = a.parent;
    rec.owner = a.owner;
    rec.transition(VmState::Scheduled);
    inventory_.add_record(std::move(rec));
    inventory_.host(a.parent).children.insert(a.definition.uuid);
  }
}

void AllocationScheduler::apply_record(const JournalRecord& record) {
  if (record.kind != RecordKind::Allocation) return;
  apply(allocation_from_json(Json::parse(record.payload)));
}

std::vector<Emission> AllocationScheduler::implied_emissions() const {
  std::vector<Emission> out;
  for (const auto& [id, a] : allocations_) {
    if (a.state == AllocationState::Active || a.state == AllocationState::Completed) {
      out.push_back(Emission{cmd::Launch{a.definition, a.parent, a.owner}, a.launch_key()});
    }
    if (a.state == AllocationState::Completed) {
      out.push_back(Emission{cmd::Stop{a.definition.uuid}, a.stop_key()});
    }
  }
  return out;
}

const ScheduledAllocation& AllocationScheduler::allocation(std::int64_t id) const {
  auto it = allocations_.find(id);
  if (it == allocations_.end()) throw Error(ErrorCode::UnknownAllocation, std::to_string(id));
  return it->second;
}

}  // namespace nestery
