#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "nestery/inventory.hpp"

namespace nestery {

// Host-local block volumes. Volume sizes are debited from the host's disk
// dimension, so admission and free_capacity see them like VM disks.
class BlockStore {
 public:
  explicit BlockStore(Inventory& inventory) : inventory_(inventory) {}

  // Throws InvalidSize, UnknownVm (host), AdmissionDenied(disk).
  BlockVolume create_volume(const std::string& host_id, std::int64_t size_gib);

  // Growth needs host disk; shrinking stops at used_gib. Throws ShrinkBelowUsed,
  // AdmissionDenied(disk), UnknownVolume, InvalidSize.
  BlockVolume resize_volume(std::int64_t volume_id, std::int64_t new_size_gib);

  // Throws VolumeAttached, UnknownVolume.
  void delete_volume(std::int64_t volume_id);

  BlockVolume attach_volume(std::int64_t volume_id, const Uuid& vm);
  BlockVolume detach_volume(std::int64_t volume_id);

  // Stores a snapshot entry the size of the VM's full disk. Names are
  // "<uuid>@<timestamp>#<n>" so repeated snapshots stay distinct.
  StoredObject snapshot_instance(const Uuid& vm, std::int64_t volume_id, Seconds now);

 private:
  Inventory& inventory_;
  std::int64_t snapshot_seq_ = 0;
};

std::string volume_label(std::int64_t volume_id);
nlohmann::json volume_to_json(const BlockVolume& v);

}  // namespace nestery
