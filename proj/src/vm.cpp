#include "nestery/vm.hpp"

#include <cstdio>

#include "nestery/error.hpp"

namespace nestery {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

bool Uuid::try_parse(std::string_view hex, Uuid& out) {
  if (hex.size() != 32) return false;
  Uuid u;
  for (std::size_t i = 0; i < 32; ++i) {
    int v = hex_value(hex[i]);
    if (v < 0) return false;
    auto& half = i < 16 ? u.hi : u.lo;
    half = (half << 4) | static_cast<std::uint64_t>(v);
  }
  out = u;
  return true;
}

Uuid Uuid::parse(std::string_view hex) {
  Uuid u;
  if (!try_parse(hex, u)) throw Error(ErrorCode::InvariantViolation, "uuid");
  return u;
}

std::string Uuid::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return std::string(buf, 32);
}

void VmDefinition::validate() const {
  if (uuid.is_nil()) throw Error(ErrorCode::InvariantViolation, "uuid");
  if (name.empty() || name.size() > kMaxNameLength) throw Error(ErrorCode::InvariantViolation, "name");
  resources.validate();
  if (level > kMaxNestingLevel) throw Error(ErrorCode::NestingDepthExceeded, std::to_string(level));
  if (level < 1) throw Error(ErrorCode::InvariantViolation, "level");
}

std::string_view vm_state_name(VmState s) {
  switch (s) {
    case VmState::Defined:
      return "DEFINED";
    case VmState::Scheduled:
      return "SCHEDULED";
    case VmState::Running:
      return "RUNNING";
    case VmState::Stopped:
      return "STOPPED";
    case VmState::Failed:
      return "FAILED";
  }
  return "?";
}

bool parse_vm_state(std::string_view name, VmState& out) {
  for (auto s : {VmState::Defined, VmState::Scheduled, VmState::Running, VmState::Stopped, VmState::Failed}) {
    if (vm_state_name(s) == name) {
      out = s;
      return true;
    }
  }
  return false;
}

bool transition_allowed(VmState from, VmState to) {
  switch (from) {
    case VmState::Defined:
      return to == VmState::Scheduled || to == VmState::Running;
    case VmState::Scheduled:
      return to == VmState::Running || to == VmState::Stopped;
    case VmState::Running:
      return to == VmState::Running || to == VmState::Stopped || to == VmState::Failed;
    case VmState::Stopped:
      return to == VmState::Running;
    case VmState::Failed:
      return false;
  }
  return false;
}

void VmRecord::transition(VmState to) {
  if (!transition_allowed(state, to)) throw Error(ErrorCode::IllegalState, std::string(vm_state_name(state)));
  state = to;
}

}  // namespace nestery
