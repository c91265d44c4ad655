#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "nestery/resources.hpp"

namespace nestery {

// 128-bit VM identifier, rendered as 32 lowercase hex digits.
struct Uuid {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  static Uuid from_u64(std::uint64_t n) { return Uuid{0, n}; }
  static Uuid parse(std::string_view hex);
  static bool try_parse(std::string_view hex, Uuid& out);
  std::string hex() const;
  bool is_nil() const { return hi == 0 && lo == 0; }

  friend auto operator<=>(const Uuid&, const Uuid&) = default;
};

inline constexpr int kMaxNestingLevel = 2;
inline constexpr std::size_t kMaxNameLength = 128;

struct VmDefinition {
  Uuid uuid;
  std::string name;
  ResourceVector resources;
  std::string image_ref;
  int level = 1;

  // Throws InvariantViolation(field) or NestingDepthExceeded.
  void validate() const;

  friend bool operator==(const VmDefinition&, const VmDefinition&) = default;
};

enum class VmState { Defined, Scheduled, Running, Stopped, Failed };

std::string_view vm_state_name(VmState s);
bool parse_vm_state(std::string_view name, VmState& out);

// Legal edges: DEFINED→{SCHEDULED,RUNNING}, SCHEDULED→{RUNNING,STOPPED},
// RUNNING→{RUNNING,STOPPED,FAILED}, STOPPED→RUNNING.
bool transition_allowed(VmState from, VmState to);

inline constexpr std::string_view kRootHostId = "l0";

struct VmRecord {
  VmDefinition definition;
  VmState state = VmState::Defined;
  std::string parent;  // host node id: "l0" or the hex uuid of an L1 VM
  std::string owner;
  std::optional<Seconds> started_at;
  std::optional<Seconds> stopped_at;

  // Throws IllegalState(current) and leaves the record unchanged when the
  // edge is not legal.
  void transition(VmState to);

  // Consumes parent capacity.
  bool active() const { return state == VmState::Running || state == VmState::Scheduled; }
};

struct HostNode {
  std::string node_id;
  int level = 0;
  ResourceVector capacity;
  std::set<Uuid> children;
};

}  // namespace nestery
