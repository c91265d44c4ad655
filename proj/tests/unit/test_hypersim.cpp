#include <fstream>

#include "helpers.hpp"
#include "nestery/hypersim.hpp"
#include "nestery/node.hpp"
#include "nestery/scheduler.hpp"

using namespace nestery;
using testing::make_def;
using testing::TempDir;

namespace {

const std::string kRoot{kRootHostId};

struct Fixture {
  Inventory inv{ResourceVector{16, 512, 65536, 1000, 8}};
  Hypervisor hv{inv, {}};
};

}  // namespace

TEST_SUITE("hypersim") {
  TEST_CASE("launch on an L1 host debits its free pool") {
    Fixture f;
    VmRecord l1 = f.hv.launch(make_def(1, {4, 512, 8192, 100, 2}), kRoot, "op", 0);
    CHECK(l1.state == VmState::Running);
    const std::string host = l1.definition.uuid.hex();
    REQUIRE(f.inv.find_host(host) != nullptr);
    CHECK(f.inv.host(host).level == 1);

    VmRecord l2 = f.hv.launch(make_def(2, {2, 512, 4096, 40, 1}, 2), host, "op", 0);
    CHECK(l2.state == VmState::Running);
    ResourceVector free = free_capacity(f.inv, host);
    CHECK(free.cpu_cores == 2);
    CHECK(free.ram_mib == 4096);
    CHECK(free.disk_gib == 60);
    CHECK(free.nics == 1);
  }

  TEST_CASE("launch errors leave the inventory untouched") {
    Fixture f;
    f.hv.launch(make_def(1, {1, 512, 64, 0, 0}), kRoot, "op", 0);
    CHECK_ERROR(f.hv.launch(make_def(1, {1, 512, 64, 0, 0}), kRoot, "op", 0), ErrorCode::DuplicateUuid);
    CHECK_ERROR(f.hv.launch(make_def(2, {1, 512, 64, 0, 0}), "ffff", "op", 0), ErrorCode::UnknownVm);
    CHECK_ERROR(f.hv.launch(make_def(3, {99, 512, 64, 0, 0}), kRoot, "op", 0), ErrorCode::AdmissionDenied);
    VmDefinition deep = make_def(4, {});
    deep.level = 3;
    CHECK_ERROR(f.hv.launch(deep, kRoot, "op", 0), ErrorCode::NestingDepthExceeded);
    VmDefinition no_image = make_def(5, {});
    no_image.image_ref.clear();
    CHECK_THROWS_AS(f.hv.launch(no_image, kRoot, "op", 0), Error);
    // an L2 under an L2 would be level 3
    VmRecord l1 = f.hv.launch(make_def(6, {2, 512, 1024, 10, 0}), kRoot, "op", 0);
    VmRecord l2 = f.hv.launch(make_def(7, {1, 512, 64, 0, 0}, 2), l1.definition.uuid.hex(), "op", 0);
    CHECK(f.inv.find_host(l2.definition.uuid.hex()) == nullptr);
    CHECK(f.inv.records().size() == 3);
    CHECK_FALSE(capacity_violation(f.inv).has_value());
  }

  TEST_CASE("stop returns resources and cascades children first") {
    Fixture f;
    VmRecord l1 = f.hv.launch(make_def(1, {4, 512, 8192, 100, 2}), kRoot, "op", 0);
    const std::string host = l1.definition.uuid.hex();
    f.hv.launch(make_def(2, {1, 512, 1024, 10, 0}, 2), host, "op", 0);
    f.hv.launch(make_def(3, {1, 512, 1024, 10, 0}, 2), host, "op", 0);

    ResourceVector before = free_capacity(f.inv, host);
    auto single = f.hv.stop(Uuid::from_u64(3), 10);
    REQUIRE(single.size() == 1);
    CHECK(single[0].state == VmState::Stopped);
    CHECK(free_capacity(f.inv, host).cpu_cores == before.cpu_cores + 1);
    CHECK(free_capacity(f.inv, host).ram_mib == before.ram_mib + 1024);

    f.hv.start(Uuid::from_u64(3), 11);
    auto cascade = f.hv.stop(l1.definition.uuid, 20);
    REQUIRE(cascade.size() == 3);
    CHECK(cascade[0].definition.level == 2);
    CHECK(cascade[1].definition.level == 2);
    CHECK(cascade[2].definition.uuid == l1.definition.uuid);
    for (const auto& r : f.inv.records()) CHECK(r.second.state == VmState::Stopped);
    CHECK_ERROR_DETAIL(f.hv.stop(l1.definition.uuid, 21), ErrorCode::IllegalState, "STOPPED");
    CHECK_ERROR(f.hv.stop(Uuid::from_u64(99), 21), ErrorCode::UnknownVm);
    // a child cannot start under a stopped host
    CHECK_THROWS_AS(f.hv.start(Uuid::from_u64(2), 22), Error);
  }

  TEST_CASE("rescale admits the delta against the parent") {
    Inventory inv{ResourceVector{3, 512, 4096, 100, 2}};
    Hypervisor hv{inv, {}};
    hv.launch(make_def(1, {2, 512, 2048, 20, 1}), kRoot, "op", 0);
    VmRecord r = hv.rescale(Uuid::from_u64(1), {3, 512, 2048, 20, 1});
    CHECK(r.definition.resources.cpu_cores == 3);
    CHECK(free_capacity(inv, kRoot).cpu_cores == 0);
    CHECK_ERROR_DETAIL(hv.rescale(Uuid::from_u64(1), {4, 512, 2048, 20, 1}), ErrorCode::AdmissionDenied, "cores");
    CHECK(inv.record(Uuid::from_u64(1)).definition.resources.cpu_cores == 3);
    // shrinking always fits
    hv.rescale(Uuid::from_u64(1), {1, 512, 1024, 20, 1});
    CHECK(free_capacity(inv, kRoot).cpu_cores == 2);
  }

  TEST_CASE("an L1 host cannot shrink below its children's usage") {
    Fixture f;
    VmRecord l1 = f.hv.launch(make_def(1, {4, 512, 8192, 100, 2}), kRoot, "op", 0);
    const std::string host = l1.definition.uuid.hex();
    f.hv.launch(make_def(2, {1, 512, 3072, 10, 0}, 2), host, "op", 0);
    CHECK_ERROR_DETAIL(f.hv.rescale(l1.definition.uuid, {4, 512, 2048, 100, 2}), ErrorCode::ShrinkBelowChildUsage,
                       "ram");
    f.hv.rescale(l1.definition.uuid, {4, 512, 4096, 100, 2});
    CHECK(f.inv.host(host).capacity.ram_mib == 4096);
    CHECK_FALSE(capacity_violation(f.inv).has_value());
  }

  TEST_CASE("status tree") {
    Fixture f;
    auto empty = f.hv.status(0);
    CHECK(empty["vm_count"] == 0);
    CHECK(empty["root"]["free"] == empty["root"]["capacity"]);

    VmRecord l1 = f.hv.launch(make_def(1, {4, 512, 8192, 100, 2}), kRoot, "op", 0);
    f.hv.launch(make_def(2, {1, 512, 1024, 10, 0}, 2), l1.definition.uuid.hex(), "op", 5);
    auto two = f.hv.status(10);
    REQUIRE(two["root"]["vms"].size() == 1);
    const auto& l1j = two["root"]["vms"][0];
    CHECK(l1j["state"] == "RUNNING");
    CHECK(l1j["uptime_s"] == 10);
    REQUIRE(l1j["host"]["vms"].size() == 1);
    CHECK(l1j["host"]["vms"][0]["state"] == "RUNNING");
    CHECK(l1j["host"]["vms"][0]["uptime_s"] == 5);
    auto free_before = l1j["host"]["free"];

    f.hv.stop(Uuid::from_u64(2), 20);
    auto after = f.hv.status(20);
    const auto& host = after["root"]["vms"][0]["host"];
    CHECK(host["vms"][0]["state"] == "STOPPED");
    CHECK(host["free"] == host["capacity"]);
    CHECK(host["free"] != free_before);
  }

  TEST_CASE("service factors and boot latency per level") {
    Fixture f;
    VmRecord l1 = f.hv.launch(make_def(1, {4, 512, 8192, 100, 2}), kRoot, "op", 0);
    VmRecord l2 = f.hv.launch(make_def(2, {1, 512, 1024, 10, 0}, 2), l1.definition.uuid.hex(), "op", 0);
    SimMachine m1 = sim_machine(l1, f.hv.model());
    SimMachine m2 = sim_machine(l2, f.hv.model());
    CHECK(m1.effective_service_factor == doctest::Approx(1.1707));
    CHECK(m2.effective_service_factor == doctest::Approx(1.5244));
    CHECK(m2.effective_service_factor >= m1.effective_service_factor);
    CHECK(m1.boot_latency_ms == doctest::Approx(500.0));
    CHECK(m2.boot_latency_ms == doctest::Approx(500.0 * 1.5244));
  }

  TEST_CASE("definition documents are written per host") {
    TempDir dir;
    Inventory inv{default_root_capacity()};
    Hypervisor hv{inv, {}, dir.path()};
    hv.launch(make_def(1, {}), kRoot, "op", 0);
    auto file = dir.path() / "l0" / (Uuid::from_u64(1).hex() + ".xml");
    REQUIRE(std::filesystem::exists(file));
    std::ifstream in(file);
    std::string doc((std::istreambuf_iterator<char>(in)), {});
    CHECK(doc.find("<vm ") != std::string::npos);
  }

  TEST_CASE("handle: launch runs, unknown stop is a permanent acked error, redelivery is skipped") {
    TempDir dir;
    Node node({dir.path()});
    CommandResult r = node.execute(cmd::Launch{make_def(1, {}), kRoot, "op"}, "k-launch");
    CHECK(r.ok);
    CHECK(node.find_record(Uuid::from_u64(1))->state == VmState::Running);

    CommandResult bad = node.execute(cmd::Stop{Uuid::from_u64(42)}, "k-stop");
    CHECK_FALSE(bad.ok);
    CHECK(bad.acked);
    CHECK(bad.error == ErrorCode::UnknownVm);
    CHECK(node.deliverable_count() == 0);

    CommandResult again = node.execute(cmd::Launch{make_def(1, {}), kRoot, "op"}, "k-launch");
    CHECK(again.skipped);
    CHECK(again.acked);

    CommandResult dup = node.execute(cmd::Launch{make_def(1, {}), kRoot, "op"}, "other-key");
    CHECK(dup.error == ErrorCode::DuplicateUuid);
  }
}
