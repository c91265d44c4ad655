#include <sys/wait.h>

#include <cstdio>

#include "helpers.hpp"
#include "json.hpp"

using testing::TempDir;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded.
Run cli(const TempDir& dir, const std::string& args) {
  std::string command = std::string(NESTERY_CLI_PATH) + " --data-dir '" + dir.path().string() + "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(command.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::string kVm = "00000000000000000000000000000001";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes: 0 success, 1 domain error, 2 usage error") {
    TempDir dir;
    CHECK(cli(dir, "launch --uuid " + kVm + " --cores 2 --ram-mib 1024").exit_code == 0);
    CHECK(cli(dir, "launch --uuid " + kVm + " --cores 2 --ram-mib 1024").exit_code == 1);
    CHECK(cli(dir, "launch --uuid 00000000000000000000000000000002 --cores 9999").exit_code == 1);
    CHECK(cli(dir, "stop 00000000000000000000000000000009").exit_code == 1);
    CHECK(cli(dir, "frobnicate").exit_code == 2);
    CHECK(cli(dir, "launch --cores").exit_code == 2);
    CHECK(cli(dir, "stop").exit_code == 2);
  }

  TEST_CASE("json output for results and errors") {
    TempDir dir;
    Run ok = cli(dir, "--json launch --uuid " + kVm + " --cores 2");
    REQUIRE(ok.exit_code == 0);
    auto j = nlohmann::json::parse(ok.out);
    CHECK(j["state"] == "RUNNING");
    CHECK(j["uuid"] == kVm);

    Run bad = cli(dir, "--json rescale " + kVm + " --cores 999");
    CHECK(bad.exit_code == 1);
    auto e = nlohmann::json::parse(bad.out);
    CHECK(e["error"] == "AdmissionDenied");
    CHECK(e["detail"] == "cores");
  }

  TEST_CASE("state carries across invocations") {
    TempDir dir;
    cli(dir, "launch --uuid " + kVm + " --cores 2");
    cli(dir, "stop " + kVm);
    Run s = cli(dir, "--json status");
    REQUIRE(s.exit_code == 0);
    auto j = nlohmann::json::parse(s.out);
    CHECK(j["vm_count"] == 1);
    CHECK(j["root"]["vms"][0]["state"] == "STOPPED");
    Run text = cli(dir, "status");
    CHECK(text.out.find("STOPPED") != std::string::npos);
  }

  TEST_CASE("schedule and tick") {
    TempDir dir;
    CHECK(cli(dir, "schedule --uuid " + kVm + " --cores 1 --start 100 --duration 60").exit_code == 0);
    CHECK(cli(dir, "tick --to 100").exit_code == 0);
    auto j = nlohmann::json::parse(cli(dir, "--json status").out);
    CHECK(j["root"]["vms"][0]["state"] == "RUNNING");
    CHECK(cli(dir, "tick --to 50").exit_code == 1);
  }
}
