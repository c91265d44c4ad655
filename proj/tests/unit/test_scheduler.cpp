#include <random>
#include <variant>

#include "helpers.hpp"
#include "nestery/clock.hpp"
#include "nestery/hypersim.hpp"
#include "nestery/node.hpp"
#include "nestery/scheduler.hpp"

using namespace nestery;
using testing::make_def;
using testing::TempDir;

namespace {

const std::string kRoot{kRootHostId};

// Root host (4,*,8192,100,2) with one running child (2,*,4096,40,1).
struct SmallHost {
  Inventory inv{ResourceVector{4, 512, 8192, 100, 2}};
  Hypervisor hv{inv, {}};
  SmallHost() { hv.launch(make_def(1, {2, 512, 4096, 40, 1}), kRoot, "op", 0); }
};

bool same(const ResourceVector& a, const ResourceVector& b) {
  return a.cpu_cores == b.cpu_cores && a.ram_mib == b.ram_mib && a.disk_gib == b.disk_gib && a.nics == b.nics &&
         a.cpu_priority == b.cpu_priority;
}

}  // namespace

TEST_SUITE("scheduler") {
  TEST_CASE("admit grants at the exact boundary") {
    SmallHost h;
    Admission a = admit(h.inv, kRoot, {2, 512, 4096, 60, 1});
    CHECK(a.granted);
    CHECK_FALSE(a.denied.has_value());
  }

  TEST_CASE("admit denies the first short dimension") {
    SmallHost h;
    Admission a = admit(h.inv, kRoot, {3, 512, 2048, 10, 1});
    CHECK_FALSE(a.granted);
    CHECK(a.denied == Dimension::Cores);

    Inventory full{ResourceVector{1, 512, 64, 0, 0}};
    Hypervisor hv{full, {}};
    hv.launch(make_def(2, {1, 512, 64, 0, 0}), kRoot, "op", 0);
    Admission m = admit(full, kRoot, ResourceVector{});
    CHECK(m.denied == Dimension::Cores);

    Admission ram = admit(h.inv, kRoot, {1, 512, 8192, 0, 0});
    CHECK(ram.denied == Dimension::Ram);
    Admission nics = admit(h.inv, kRoot, {1, 512, 64, 0, 2});
    CHECK(nics.denied == Dimension::Nics);
  }

  TEST_CASE("free capacity arithmetic") {
    Inventory empty{ResourceVector{2, 700, 4096, 40, 2}};
    CHECK(same(free_capacity(empty, kRoot), {2, 700, 4096, 40, 2}));

    Inventory inv{ResourceVector{2, 700, 4096, 40, 2}};
    Hypervisor hv{inv, {}};
    hv.launch(make_def(1, {1, 100, 1024, 10, 0}), kRoot, "op", 0);
    CHECK(same(free_capacity(inv, kRoot), {1, 700, 3072, 30, 2}));

    hv.launch(make_def(2, {1, 100, 3072, 30, 2}), kRoot, "op", 0);
    ResourceVector f = free_capacity(inv, kRoot);
    CHECK(f.cpu_cores == 0);
    CHECK(f.ram_mib == 0);
    CHECK(f.disk_gib == 0);
    CHECK(f.nics == 0);
    CHECK(core_utilization(inv, kRoot) == doctest::Approx(1.0));
  }

  TEST_CASE("schedule_future validation") {
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, nullptr);
    auto a = s.schedule_future(make_def(1, {}), kRoot, "op", 100, 60, 0);
    CHECK(a.state == AllocationState::Waiting);
    CHECK(a.id == 1);
    CHECK_ERROR(s.schedule_future(make_def(2, {}), kRoot, "op", 9, 60, 10), ErrorCode::StartInPast);
    CHECK_ERROR(s.schedule_future(make_def(3, {}), kRoot, "op", 100, 0, 0), ErrorCode::InvalidDuration);
    // no capacity is held while waiting
    CHECK(inv.find_record(Uuid::from_u64(1)) == nullptr);
  }

  TEST_CASE("activation and expiry are inclusive") {
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, nullptr);
    auto a = s.schedule_future(make_def(1, {}), kRoot, "op", 100, 60, 0);
    CHECK(s.tick(99).empty());
    auto launch = s.tick(100);
    REQUIRE(launch.size() == 1);
    CHECK(std::holds_alternative<cmd::Launch>(launch[0].command));
    CHECK(launch[0].idempotency_key == a.launch_key());
    CHECK(s.allocation(1).state == AllocationState::Active);
    CHECK(inv.record(Uuid::from_u64(1)).state == VmState::Scheduled);
    CHECK(s.tick(159).empty());
    auto stop = s.tick(160);
    REQUIRE(stop.size() == 1);
    CHECK(std::holds_alternative<cmd::Stop>(stop[0].command));
    CHECK(stop[0].idempotency_key == a.stop_key());
    CHECK(s.allocation(1).state == AllocationState::Completed);
  }

  TEST_CASE("ticking twice at one timestamp emits nothing new") {
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, nullptr);
    s.schedule_future(make_def(1, {}), kRoot, "op", 10, 5, 0);
    CHECK(s.tick(10).size() == 1);
    CHECK(s.tick(10).empty());
    CHECK(s.tick(15).size() == 1);
    CHECK(s.tick(15).empty());
  }

  TEST_CASE("same-tick contention: earlier-scheduled wins, the other is cancelled") {
    Inventory inv{ResourceVector{4, 512, 8192, 100, 2}};
    AllocationScheduler s(inv, nullptr);
    s.schedule_future(make_def(1, {3, 512, 1024, 10, 0}), kRoot, "op", 50, 10, 0);
    s.schedule_future(make_def(2, {3, 512, 1024, 10, 0}), kRoot, "op", 50, 10, 0);
    auto out = s.tick(50);
    REQUIRE(out.size() == 1);
    CHECK(out[0].idempotency_key == "alloc-1-launch");
    CHECK(s.allocation(2).state == AllocationState::Cancelled);
    CHECK_FALSE(s.allocation(2).reason.empty());
  }

  TEST_CASE("clock going backwards is rejected") {
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, nullptr);
    s.tick(60);
    CHECK_ERROR(s.tick(50), ErrorCode::ClockWentBackwards);
    Clock c;
    c.advance_to(60);
    CHECK_ERROR(c.advance_to(50), ErrorCode::ClockWentBackwards);
  }

  TEST_CASE("scheduling is idempotent per key") {
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, nullptr);
    auto a = s.schedule_future(make_def(1, {}), kRoot, "op", 10, 5, 0, "k");
    auto b = s.schedule_future(make_def(1, {}), kRoot, "op", 10, 5, 0, "k");
    CHECK(a.id == b.id);
    CHECK(s.allocations().size() == 1);
  }

  TEST_CASE("allocations replay from kind-4 records") {
    TempDir dir;
    Journal j(dir.path() / "j.log");
    Inventory inv{default_root_capacity()};
    AllocationScheduler s(inv, &j);
    s.schedule_future(make_def(1, {}), kRoot, "op", 10, 5, 0);
    s.schedule_future(make_def(2, {}), kRoot, "op", 20, 5, 0);
    s.tick(16);

    Inventory inv2{default_root_capacity()};
    AllocationScheduler s2(inv2, nullptr);
    for (const auto& r : j.read_all().records) s2.apply_record(r);
    REQUIRE(s2.allocations().size() == 2);
    CHECK(s2.allocation(1).state == AllocationState::Completed);
    CHECK(s2.allocation(2).state == AllocationState::Waiting);
    CHECK(inv2.record(Uuid::from_u64(1)).state == VmState::Scheduled);
    auto implied = s2.implied_emissions();
    CHECK(implied.size() == 2);  // launch and stop of allocation 1
  }

  TEST_CASE("random tick sequences keep the capacity invariant and the completed count") {
    std::mt19937_64 rng(7);
    Inventory inv{ResourceVector{8, 512, 8192, 100, 4}};
    Hypervisor hv{inv, {}};
    AllocationScheduler s(inv, nullptr);
    int launches = 0, stops = 0;
    Seconds now = 0;
    for (int i = 0; i < 200; ++i) {
      std::uniform_int_distribution<int> cores(1, 4), start(0, 50), dur(1, 30);
      s.schedule_future(make_def(100 + i, {cores(rng), 512, 512, 5, 0}), kRoot, "op", now + start(rng), dur(rng), now);
      now += std::uniform_int_distribution<int>(0, 5)(rng);
      for (const auto& e : s.tick(now)) {
        if (auto* l = std::get_if<cmd::Launch>(&e.command)) {
          ++launches;
          hv.launch(l->definition, l->parent, l->owner, now);
        } else if (auto* st = std::get_if<cmd::Stop>(&e.command)) {
          ++stops;
          hv.stop(st->uuid, now);
        }
      }
      REQUIRE_FALSE(capacity_violation(inv).has_value());
    }
    for (const auto& e : s.tick(now + 1000)) {
      if (std::holds_alternative<cmd::Launch>(e.command)) ++launches;
      if (auto* st = std::get_if<cmd::Stop>(&e.command)) {
        ++stops;
        hv.stop(st->uuid, now + 1000);
      }
    }
    int completed = 0;
    for (const auto& [id, a] : s.allocations()) completed += a.state == AllocationState::Completed;
    CHECK(completed == stops);
    CHECK(stops == launches);
  }
}
