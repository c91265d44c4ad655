#include "helpers.hpp"
#include "nestery/blockstore.hpp"
#include "nestery/hypersim.hpp"
#include "nestery/scheduler.hpp"

using namespace nestery;
using testing::make_def;

namespace {

const std::string kRoot{kRootHostId};

struct Fixture {
  Inventory inv{ResourceVector{8, 512, 8192, 100, 2}};
  Hypervisor hv{inv, {}};
  BlockStore bs{inv};

  std::int64_t free_disk() const { return free_capacity(inv, kRoot).disk_gib; }
};

}  // namespace

TEST_SUITE("blockstore") {
  TEST_CASE("create debits host disk") {
    Fixture f;
    BlockVolume v = f.bs.create_volume(kRoot, 10);
    CHECK(v.size_gib == 10);
    CHECK(v.used_gib == 0);
    CHECK_FALSE(v.filesystem_label.empty());
    CHECK(f.free_disk() == 90);
    CHECK_ERROR(f.bs.create_volume(kRoot, 0), ErrorCode::InvalidSize);
    CHECK_ERROR_DETAIL(f.bs.create_volume(kRoot, 200), ErrorCode::AdmissionDenied, "disk");
    CHECK_ERROR(f.bs.create_volume("nope", 1), ErrorCode::UnknownVm);
  }

  TEST_CASE("resize grows with host disk and shrinks down to used") {
    Fixture f;
    f.hv.launch(make_def(1, {1, 512, 64, 6, 0}), kRoot, "op", 0);
    BlockVolume v = f.bs.create_volume(kRoot, 10);
    f.bs.snapshot_instance(Uuid::from_u64(1), v.volume_id, 0);
    CHECK(f.inv.volume(v.volume_id).used_gib == 6);
    CHECK_ERROR(f.bs.resize_volume(v.volume_id, 5), ErrorCode::ShrinkBelowUsed);
    CHECK(f.bs.resize_volume(v.volume_id, 6).size_gib == 6);
    CHECK(f.free_disk() == 100 - 6 - 6);

    // 88 free: grow by 88 fits, by 89 does not
    CHECK_ERROR_DETAIL(f.bs.resize_volume(v.volume_id, 6 + 89), ErrorCode::AdmissionDenied, "disk");
    CHECK(f.bs.resize_volume(v.volume_id, 6 + 88).size_gib == 94);
    CHECK(f.free_disk() == 0);
    CHECK_ERROR(f.bs.resize_volume(99, 5), ErrorCode::UnknownVolume);
  }

  TEST_CASE("delete credits disk unless attached") {
    Fixture f;
    f.hv.launch(make_def(1, {1, 512, 64, 0, 0}), kRoot, "op", 0);
    BlockVolume v = f.bs.create_volume(kRoot, 10);
    f.bs.attach_volume(v.volume_id, Uuid::from_u64(1));
    CHECK_ERROR(f.bs.delete_volume(v.volume_id), ErrorCode::VolumeAttached);
    f.bs.detach_volume(v.volume_id);
    f.bs.delete_volume(v.volume_id);
    CHECK(f.free_disk() == 100);
    CHECK_ERROR(f.bs.delete_volume(v.volume_id), ErrorCode::UnknownVolume);
    CHECK_ERROR(f.bs.attach_volume(42, Uuid::from_u64(1)), ErrorCode::UnknownVolume);
  }

  TEST_CASE("snapshots take the VM's full disk and get distinct names") {
    Fixture f;
    f.hv.launch(make_def(1, {1, 512, 64, 5, 0}), kRoot, "op", 0);
    f.hv.launch(make_def(2, {1, 512, 64, 10, 0}), kRoot, "op", 0);
    BlockVolume v = f.bs.create_volume(kRoot, 20);
    f.bs.snapshot_instance(Uuid::from_u64(1), v.volume_id, 1);
    StoredObject s = f.bs.snapshot_instance(Uuid::from_u64(2), v.volume_id, 2);
    CHECK(s.kind == StoredObject::Kind::Snapshot);
    CHECK(s.size_gib == 10);
    CHECK(f.inv.volume(v.volume_id).used_gib == 15);

    BlockVolume small = f.bs.create_volume(kRoot, 12);
    f.bs.snapshot_instance(Uuid::from_u64(1), small.volume_id, 3);
    CHECK_ERROR(f.bs.snapshot_instance(Uuid::from_u64(2), small.volume_id, 3), ErrorCode::InsufficientSpace);
    CHECK(f.inv.volume(small.volume_id).used_gib == 5);

    BlockVolume big = f.bs.create_volume(kRoot, 40);
    StoredObject a = f.bs.snapshot_instance(Uuid::from_u64(2), big.volume_id, 7);
    StoredObject b = f.bs.snapshot_instance(Uuid::from_u64(2), big.volume_id, 7);
    CHECK(a.name != b.name);
    CHECK(a.name.find(Uuid::from_u64(2).hex()) != std::string::npos);

    CHECK_ERROR(f.bs.snapshot_instance(Uuid::from_u64(9), big.volume_id, 8), ErrorCode::UnknownVm);
    CHECK_ERROR(f.bs.snapshot_instance(Uuid::from_u64(2), 999, 8), ErrorCode::UnknownVolume);
  }

  TEST_CASE("disk conservation across mixed operations") {
    Fixture f;
    f.hv.launch(make_def(1, {1, 512, 64, 20, 0}), kRoot, "op", 0);
    BlockVolume a = f.bs.create_volume(kRoot, 30);
    BlockVolume b = f.bs.create_volume(kRoot, 10);
    f.bs.resize_volume(a.volume_id, 25);
    f.bs.delete_volume(b.volume_id);
    std::int64_t vols = 0;
    for (const auto& [id, v] : f.inv.volumes()) vols += v.size_gib;
    std::int64_t vms = 0;
    for (const auto& [id, r] : f.inv.records()) vms += r.active() ? r.definition.resources.disk_gib : 0;
    CHECK(f.free_disk() + vols + vms == 100);
    CHECK_FALSE(capacity_violation(f.inv).has_value());
  }

  TEST_CASE("volume json") {
    Fixture f;
    BlockVolume v = f.bs.create_volume(kRoot, 3);
    auto j = volume_to_json(v);
    CHECK(j["volume_id"] == v.volume_id);
    CHECK(j["size_gib"] == 3);
    CHECK(j["used_gib"] == 0);
  }
}
