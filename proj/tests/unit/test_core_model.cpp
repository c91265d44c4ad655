#include <random>

#include "helpers.hpp"
#include "nestery/definition_doc.hpp"
#include "nestery/resources.hpp"
#include "nestery/vm.hpp"

using namespace nestery;
using testing::make_def;

TEST_SUITE("core-model") {
  TEST_CASE("serialize renders the canonical document") {
    VmDefinition d = make_def(1, {2, 512, 2048, 20, 1}, 1, "web");
    CHECK(serialize_definition(d) ==
          R"(<vm uuid="00000000000000000000000000000001" level="1"><name>web</name>)"
          R"(<resources cores="2" priority="512" ram_mib="2048" disk_gib="20" nics="1"/>)"
          R"(<image ref="app.qcow2"/></vm>)");
  }

  TEST_CASE("serialize then parse is the identity") {
    VmDefinition d = make_def(0xabcdef, {3, 100, 4096, 7, 2}, 2, "a <b> & \"c\" 'd'");
    CHECK(parse_definition(serialize_definition(d)) == d);
  }

  TEST_CASE("documents differ only in the name element") {
    std::string a = serialize_definition(make_def(5, {}, 1, "alpha"));
    std::string b = serialize_definition(make_def(5, {}, 1, "beta"));
    auto pa = a.find("alpha");
    REQUIRE(pa != std::string::npos);
    CHECK(a.substr(0, pa) == b.substr(0, pa));
    CHECK(a.substr(pa + 5) == b.substr(pa + 4));
  }

  TEST_CASE("parse rejects out-of-bounds and malformed documents") {
    std::string doc = serialize_definition(make_def(1, {2, 512, 2048, 20, 1}));
    std::string zero_cores = doc;
    zero_cores.replace(zero_cores.find("cores=\"2\""), 9, "cores=\"0\"");
    CHECK_ERROR_DETAIL(parse_definition(zero_cores), ErrorCode::InvariantViolation, "cpu_cores");

    std::string small_ram = doc;
    small_ram.replace(small_ram.find("ram_mib=\"2048\""), 14, "ram_mib=\"63\"");
    CHECK_ERROR_DETAIL(parse_definition(small_ram), ErrorCode::InvariantViolation, "ram_mib");

    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, doc.size() / 2, doc.size() - 1}) {
      CHECK_ERROR(parse_definition(doc.substr(0, cut)), ErrorCode::MalformedDocument);
    }
    CHECK_ERROR(parse_definition(doc + " "), ErrorCode::MalformedDocument);
    std::string spaced = doc;
    spaced.insert(spaced.find("<name>"), " ");
    CHECK_ERROR(parse_definition(spaced), ErrorCode::MalformedDocument);
    std::string level3 = doc;
    level3.replace(level3.find("level=\"1\""), 9, "level=\"3\"");
    CHECK_ERROR(parse_definition(level3), ErrorCode::NestingDepthExceeded);
  }

  TEST_CASE("serialize/parse round trip holds for random valid definitions") {
    std::mt19937_64 rng(7);
    const std::string alphabet = "abcXYZ019 -_.<>&\"'/=";
    for (int i = 0; i < 500; ++i) {
      VmDefinition d;
      d.uuid = Uuid{rng(), rng() | 1};
      std::size_t len = 1 + rng() % 40;
      for (std::size_t k = 0; k < len; ++k) d.name += alphabet[rng() % alphabet.size()];
      d.resources = {static_cast<std::int64_t>(1 + rng() % 64), static_cast<std::int64_t>(1 + rng() % 1024),
                     static_cast<std::int64_t>(64 + rng() % 100000), static_cast<std::int64_t>(rng() % 5000),
                     static_cast<std::int64_t>(rng() % 8)};
      d.image_ref = "img-" + std::to_string(rng() % 1000) + ".qcow2";
      d.level = 1 + static_cast<int>(rng() % 2);
      std::string doc = serialize_definition(d);
      VmDefinition back = parse_definition(doc);
      REQUIRE(back == d);
      REQUIRE(serialize_definition(back) == doc);
    }
  }

  TEST_CASE("definition invariants") {
    VmDefinition d = make_def(1, {});
    d.uuid = Uuid{};
    CHECK_ERROR_DETAIL(d.validate(), ErrorCode::InvariantViolation, "uuid");
    d = make_def(1, {});
    d.name = "";
    CHECK_ERROR_DETAIL(d.validate(), ErrorCode::InvariantViolation, "name");
    d.name = std::string(129, 'x');
    CHECK_ERROR_DETAIL(d.validate(), ErrorCode::InvariantViolation, "name");
    d.name = std::string(128, 'x');
    CHECK_NOTHROW(d.validate());
    d.level = 3;
    CHECK_ERROR(d.validate(), ErrorCode::NestingDepthExceeded);
  }

  TEST_CASE("uuid parsing") {
    Uuid u;
    CHECK(Uuid::try_parse("000000000000000000000000000000ff", u));
    CHECK(u == Uuid::from_u64(255));
    CHECK(Uuid::parse("0123456789ABCDEF0123456789abcdef").hex() == "0123456789abcdef0123456789abcdef");
    CHECK_FALSE(Uuid::try_parse("123", u));
    CHECK_FALSE(Uuid::try_parse("g0000000000000000000000000000000", u));
    CHECK_ERROR(Uuid::parse("xyz"), ErrorCode::InvariantViolation);
  }

  TEST_CASE("resource vector bounds") {
    CHECK(ResourceVector{}.valid());
    CHECK_ERROR_DETAIL((ResourceVector{1, 0, 64, 0, 0}.validate()), ErrorCode::InvariantViolation, "cpu_priority");
    CHECK_ERROR_DETAIL((ResourceVector{1, 1025, 64, 0, 0}.validate()), ErrorCode::InvariantViolation, "cpu_priority");
    CHECK_ERROR_DETAIL((ResourceVector{1, 1, 64, -1, 0}.validate()), ErrorCode::InvariantViolation, "disk_gib");
    CHECK_ERROR_DETAIL((ResourceVector{1, 1, 64, 0, -1}.validate()), ErrorCode::InvariantViolation, "nics");
  }

  TEST_CASE("vector_fits ignores priority and checks every consumable") {
    CHECK(vector_fits({2, 512, 4096, 40, 1}, {2, 1, 4096, 40, 1}));
    CHECK_FALSE(vector_fits({3, 512, 2048, 10, 1}, {2, 512, 8192, 100, 2}));
    CHECK(first_shortfall({3, 512, 2048, 10, 1}, {2, 512, 8192, 100, 2}) == Dimension::Cores);
    ResourceVector zero{1, 1, 64, 0, 0};
    CHECK(vector_fits(zero, {1, 1, 64, 0, 0}));
    CHECK(first_shortfall({1, 1, 64, 5, 3}, {1, 1, 64, 4, 2}) == Dimension::Disk);
  }

  TEST_CASE("vector_fits is monotone") {
    std::mt19937_64 rng(11);
    auto draw = [&](std::int64_t hi) { return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi)); };
    for (int i = 0; i < 2000; ++i) {
      ResourceVector f{1 + draw(16), 1 + draw(1024), 64 + draw(8192), draw(200), draw(4)};
      ResourceVector r{1 + draw(16), 1 + draw(1024), 64 + draw(8192), draw(200), draw(4)};
      if (!vector_fits(r, f)) continue;
      ResourceVector smaller{1 + draw(r.cpu_cores), 1 + draw(1024), 64 + draw(r.ram_mib - 63),
                             draw(r.disk_gib + 1), draw(r.nics + 1)};
      REQUIRE(vector_fits(smaller, f));
    }
  }

  TEST_CASE("state machine allows exactly the listed edges") {
    using S = VmState;
    const S all[] = {S::Defined, S::Scheduled, S::Running, S::Stopped, S::Failed};
    const std::set<std::pair<S, S>> legal = {{S::Defined, S::Scheduled}, {S::Defined, S::Running},
                                             {S::Scheduled, S::Running}, {S::Scheduled, S::Stopped},
                                             {S::Running, S::Running},   {S::Running, S::Stopped},
                                             {S::Running, S::Failed},    {S::Stopped, S::Running}};
    for (S a : all) {
      for (S b : all) CHECK(transition_allowed(a, b) == (legal.count({a, b}) == 1));
    }
  }

  TEST_CASE("state machine fuzz never leaves the five states and rejections change nothing") {
    std::mt19937_64 rng(3);
    const VmState all[] = {VmState::Defined, VmState::Scheduled, VmState::Running, VmState::Stopped,
                           VmState::Failed};
    for (int run = 0; run < 200; ++run) {
      VmRecord rec;
      for (int step = 0; step < 50; ++step) {
        VmState to = all[rng() % 5];
        VmState before = rec.state;
        try {
          rec.transition(to);
          REQUIRE(transition_allowed(before, to));
          REQUIRE(rec.state == to);
        } catch (const Error& e) {
          REQUIRE(e.code() == ErrorCode::IllegalState);
          REQUIRE(e.detail() == vm_state_name(before));
          REQUIRE(rec.state == before);
        }
        VmState parsed;
        REQUIRE(parse_vm_state(vm_state_name(rec.state), parsed));
        REQUIRE(parsed == rec.state);
      }
    }
  }

  TEST_CASE("error names round trip") {
    for (int i = 0; i <= static_cast<int>(ErrorCode::BindFailure); ++i) {
      auto code = static_cast<ErrorCode>(i);
      ErrorCode back;
      REQUIRE(parse_error_code(error_code_name(code), back));
      CHECK(back == code);
    }
    CHECK(std::string(Error(ErrorCode::AdmissionDenied, "cores").what()) == "AdmissionDenied(cores)");
  }
}
