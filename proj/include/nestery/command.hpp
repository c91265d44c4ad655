#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"
#include "nestery/resources.hpp"
#include "nestery/vm.hpp"

namespace nestery {

using Json = nlohmann::json;

namespace cmd {

struct Launch {
  VmDefinition definition;
  std::string parent{kRootHostId};  // "l0" for level-1 VMs, an L1 uuid for level-2
  std::string owner;
};
struct Start {
  Uuid uuid;
};
struct Stop {
  Uuid uuid;
};
struct Rescale {
  Uuid uuid;
  ResourceVector resources;
};
struct ScheduleAllocation {
  VmDefinition definition;
  std::string parent{kRootHostId};
  Seconds start_time = 0;
  Seconds duration_s = 0;
  std::string owner;
};
struct Status {};
struct VolumeCreate {
  std::int64_t size_gib = 0;
  std::string host{kRootHostId};
};
struct VolumeResize {
  std::int64_t volume_id = 0;
  std::int64_t size_gib = 0;
};
struct VolumeDelete {
  std::int64_t volume_id = 0;
};
struct VolumeAttach {
  std::int64_t volume_id = 0;
  Uuid vm;
};
struct VolumeDetach {
  std::int64_t volume_id = 0;
};
struct SnapshotCreate {
  Uuid vm;
  std::int64_t volume_id = 0;
};

}  // namespace cmd

using Command = std::variant<cmd::Launch, cmd::Start, cmd::Stop, cmd::Rescale, cmd::ScheduleAllocation,
                             cmd::Status, cmd::VolumeCreate, cmd::VolumeResize, cmd::VolumeDelete,
                             cmd::VolumeAttach, cmd::VolumeDetach, cmd::SnapshotCreate>;

std::string_view command_type(const Command& c);

Json resources_to_json(const ResourceVector& r);
ResourceVector resources_from_json(const Json& j);
Json definition_to_json(const VmDefinition& d);
VmDefinition definition_from_json(const Json& j);

// {"type": "launch", ...}. Decoding throws InvalidArgument(field) on shape
// errors; value invariants are checked when the command is executed.
Json command_to_json(const Command& c);
Command command_from_json(const Json& j);

}  // namespace nestery
