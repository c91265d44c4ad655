#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nestery/vm.hpp"

namespace nestery {

struct StoredObject {
  enum class Kind { Snapshot, Data };
  std::string name;
  Kind kind = Kind::Data;
  std::int64_t size_gib = 0;
};

struct BlockVolume {
  std::int64_t volume_id = 0;
  std::string host{kRootHostId};
  std::int64_t size_gib = 1;
  std::int64_t used_gib = 0;
  std::string filesystem_label;
  std::optional<Uuid> attached_to;
  std::vector<StoredObject> contents;
};

// The machine model shared by the orchestration modules: hosts, VM records
// and volumes. Not synchronized; the owning node serializes access.
class Inventory {
 public:
  explicit Inventory(ResourceVector root_capacity);

  const HostNode& host(const std::string& node_id) const;  // throws UnknownVm
  HostNode& host(const std::string& node_id);
  const HostNode* find_host(const std::string& node_id) const;
  HostNode& add_host(HostNode node);

  const VmRecord& record(const Uuid& uuid) const;  // throws UnknownVm
  VmRecord& record(const Uuid& uuid);
  const VmRecord* find_record(const Uuid& uuid) const;
  VmRecord& add_record(VmRecord rec);

  const BlockVolume& volume(std::int64_t id) const;  // throws UnknownVolume
  BlockVolume& volume(std::int64_t id);
  BlockVolume& add_volume(BlockVolume v);
  void remove_volume(std::int64_t id);
  // Size changes go through here so the per-host totals stay exact.
  void set_volume_size(std::int64_t id, std::int64_t size_gib);
  std::int64_t volume_disk_on(const std::string& host_id) const;
  std::int64_t next_volume_id() const { return next_volume_id_; }

  const std::map<std::string, HostNode>& hosts() const { return hosts_; }
  const std::map<Uuid, VmRecord>& records() const { return records_; }
  const std::map<std::int64_t, BlockVolume>& volumes() const { return volumes_; }

 private:
  std::map<std::string, HostNode> hosts_;
  std::map<Uuid, VmRecord> records_;
  std::map<std::int64_t, BlockVolume> volumes_;
  std::map<std::string, std::int64_t> volume_disk_;
  std::int64_t next_volume_id_ = 1;
};

}  // namespace nestery
