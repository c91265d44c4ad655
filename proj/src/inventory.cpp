#include "nestery/inventory.hpp"

#include "nestery/error.hpp"

namespace nestery {

Inventory::Inventory(ResourceVector root_capacity) {
  HostNode root;
  root.node_id = std::string(kRootHostId);
  root.level = 0;
  root.capacity = root_capacity;
  hosts_.emplace(root.node_id, std::move(root));
}

const HostNode* Inventory::find_host(const std::string& node_id) const {
  auto it = hosts_.find(node_id);
  return it == hosts_.end() ? nullptr : &it->second;
}

const HostNode& Inventory::host(const std::string& node_id) const {
  const HostNode* h = find_host(node_id);
  if (h == nullptr) throw Error(ErrorCode::UnknownVm, node_id);
  return *h;
}

HostNode& Inventory::host(const std::string& node_id) {
  return const_cast<HostNode&>(static_cast<const Inventory&>(*this).host(node_id));
}

HostNode& Inventory::add_host(HostNode node) {
  std::string id = node.node_id;
  return hosts_.insert_or_assign(id, std::move(node)).first->second;
}

const VmRecord* Inventory::find_record(const Uuid& uuid) const {
  auto it = records_.find(uuid);
  return it == records_.end() ? nullptr : &it->second;
}

const VmRecord& Inventory::record(const Uuid& uuid) const {
  const VmRecord* r = find_record(uuid);
  if (r == nullptr) throw Error(ErrorCode::UnknownVm, uuid.hex());
  return *r;
}

VmRecord& Inventory::record(const Uuid& uuid) {
  return const_cast<VmRecord&>(static_cast<const Inventory&>(*this).record(uuid));
}

VmRecord& Inventory::add_record(VmRecord rec) {
  Uuid id = rec.definition.uuid;
  if (records_.count(id) != 0) throw Error(ErrorCode::DuplicateUuid, id.hex());
  return records_.emplace(id, std::move(rec)).first->second;
}

const BlockVolume& Inventory::volume(std::int64_t id) const {
  auto it = volumes_.find(id);
  if (it == volumes_.end()) throw Error(ErrorCode::UnknownVolume, std::to_string(id));
  return it->second;
}

BlockVolume& Inventory::volume(std::int64_t id) {
  return const_cast<BlockVolume&>(static_cast<const Inventory&>(*this).volume(id));
}

BlockVolume& Inventory::add_volume(BlockVolume v) {
  if (v.volume_id == 0) v.volume_id = next_volume_id_;
  next_volume_id_ = std::max(next_volume_id_, v.volume_id + 1);
  std::int64_t id = v.volume_id;
  if (auto old = volumes_.find(id); old != volumes_.end()) volume_disk_[old->second.host] -= old->second.size_gib;
  volume_disk_[v.host] += v.size_gib;
  return volumes_.insert_or_assign(id, std::move(v)).first->second;
}

void Inventory::remove_volume(std::int64_t id) {
  auto it = volumes_.find(id);
  if (it == volumes_.end()) throw Error(ErrorCode::UnknownVolume, std::to_string(id));
  volume_disk_[it->second.host] -= it->second.size_gib;
  volumes_.erase(it);
}

void Inventory::set_volume_size(std::int64_t id, std::int64_t size_gib) {
  BlockVolume& v = volume(id);
  volume_disk_[v.host] += size_gib - v.size_gib;
  v.size_gib = size_gib;
}

std::int64_t Inventory::volume_disk_on(const std::string& host_id) const {
  auto it = volume_disk_.find(host_id);
  return it == volume_disk_.end() ? 0 : it->second;
}

}  // namespace nestery
