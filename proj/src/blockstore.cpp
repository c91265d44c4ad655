#include "nestery/blockstore.hpp"

#include "nestery/error.hpp"
#include "nestery/scheduler.hpp"

namespace nestery {

std::string volume_label(std::int64_t volume_id) { return "nestfs-vol" + std::to_string(volume_id); }

BlockVolume BlockStore::create_volume(const std::string& host_id, std::int64_t size_gib) {
  if (size_gib < 1) throw Error(ErrorCode::InvalidSize, std::to_string(size_gib));
  const HostNode& host = inventory_.host(host_id);
  if (host.level == 1 && inventory_.record(Uuid::parse(host_id)).state != VmState::Running) {
    throw Error(ErrorCode::IllegalState, "host not RUNNING");
  }
  if (free_capacity(inventory_, host_id).disk_gib < size_gib) throw Error(ErrorCode::AdmissionDenied, "disk");

  BlockVolume v;
  v.volume_id = inventory_.next_volume_id();
  v.host = host_id;
  v.size_gib = size_gib;
  v.filesystem_label = volume_label(v.volume_id);
  return inventory_.add_volume(std::move(v));
}

BlockVolume BlockStore::resize_volume(std::int64_t volume_id, std::int64_t new_size_gib) {
  BlockVolume& v = inventory_.volume(volume_id);
  if (new_size_gib < 1) throw Error(ErrorCode::InvalidSize, std::to_string(new_size_gib));
  if (new_size_gib < v.used_gib) throw Error(ErrorCode::ShrinkBelowUsed, std::to_string(v.used_gib));
  const std::int64_t growth = new_size_gib - v.size_gib;
  if (growth > 0 && free_capacity(inventory_, v.host).disk_gib < growth) {
    throw Error(ErrorCode::AdmissionDenied, "disk");
  }
  inventory_.set_volume_size(volume_id, new_size_gib);
  return v;
}

void BlockStore::delete_volume(std::int64_t volume_id) {
  const BlockVolume& v = inventory_.volume(volume_id);
  if (v.attached_to) throw Error(ErrorCode::VolumeAttached, v.attached_to->hex());
  inventory_.remove_volume(volume_id);
}

BlockVolume BlockStore::attach_volume(std::int64_t volume_id, const Uuid& vm) {
  BlockVolume& v = inventory_.volume(volume_id);
  const VmRecord& rec = inventory_.record(vm);
  if (rec.parent != v.host) throw Error(ErrorCode::InvalidArgument, "volume and VM on different hosts");
  if (v.attached_to && *v.attached_to != vm) throw Error(ErrorCode::VolumeAttached, v.attached_to->hex());
  v.attached_to = vm;
  return v;
}

BlockVolume BlockStore::detach_volume(std::int64_t volume_id) {
  BlockVolume& v = inventory_.volume(volume_id);
  v.attached_to.reset();
  return v;
}

StoredObject BlockStore::snapshot_instance(const Uuid& vm, std::int64_t volume_id, Seconds now) {
  const VmRecord& rec = inventory_.record(vm);
  BlockVolume& v = inventory_.volume(volume_id);
  const std::int64_t size = rec.definition.resources.disk_gib;
  if (v.size_gib - v.used_gib < size) {
    throw Error(ErrorCode::InsufficientSpace, std::to_string(v.size_gib - v.used_gib) + " < " + std::to_string(size));
  }
  StoredObject obj{vm.hex() + "@" + std::to_string(now) + "#" + std::to_string(++snapshot_seq_),
                   StoredObject::Kind::Snapshot, size};
  v.contents.push_back(obj);
  v.used_gib += size;
  return obj;
}

nlohmann::json volume_to_json(const BlockVolume& v) {
  nlohmann::json contents = nlohmann::json::array();
  for (const auto& obj : v.contents) {
    contents.push_back({{"name", obj.name},
                        {"kind", obj.kind == StoredObject::Kind::Snapshot ? "snapshot" : "data"},
                        {"size_gib", obj.size_gib}});
  }
  return {{"volume_id", v.volume_id},
          {"host", v.host},
          {"size_gib", v.size_gib},
          {"used_gib", v.used_gib},
          {"filesystem_label", v.filesystem_label},
          {"attached_to", v.attached_to ? nlohmann::json(v.attached_to->hex()) : nlohmann::json(nullptr)},
          {"contents", contents}};
}

}  // namespace nestery
