#include "nestery/command.hpp"

#include "nestery/error.hpp"

namespace nestery {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Error(ErrorCode::InvalidArgument, name);
  return j.at(name);
}

std::int64_t int_field(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number_integer()) throw Error(ErrorCode::InvalidArgument, name);
  return v.get<std::int64_t>();
}

std::string string_field(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, name);
  return v.get<std::string>();
}

std::string optional_string(const Json& j, const char* name, std::string fallback) {
  if (!j.contains(name)) return fallback;
  return string_field(j, name);
}

Uuid uuid_field(const Json& j, const char* name) {
  Uuid u;
  if (!Uuid::try_parse(string_field(j, name), u)) throw Error(ErrorCode::InvalidArgument, name);
  return u;
}

}  // namespace

Json resources_to_json(const ResourceVector& r) {
  return Json{{"cores", r.cpu_cores},
              {"priority", r.cpu_priority},
              {"ram_mib", r.ram_mib},
              {"disk_gib", r.disk_gib},
              {"nics", r.nics}};
}

ResourceVector resources_from_json(const Json& j) {
  ResourceVector r;
  r.cpu_cores = int_field(j, "cores");
  r.cpu_priority = int_field(j, "priority");
  r.ram_mib = int_field(j, "ram_mib");
  r.disk_gib = int_field(j, "disk_gib");
  r.nics = int_field(j, "nics");
  return r;
}

Json definition_to_json(const VmDefinition& d) {
  return Json{{"uuid", d.uuid.hex()},
              {"name", d.name},
              {"level", d.level},
              {"image_ref", d.image_ref},
              {"resources", resources_to_json(d.resources)}};
}

VmDefinition definition_from_json(const Json& j) {
  VmDefinition d;
  d.uuid = uuid_field(j, "uuid");
  d.name = string_field(j, "name");
  d.level = static_cast<int>(int_field(j, "level"));
  d.image_ref = string_field(j, "image_ref");
  d.resources = resources_from_json(field(j, "resources"));
  return d;
}

std::string_view command_type(const Command& c) {
  return std::visit(Overloaded{
                        [](const cmd::Launch&) { return std::string_view("launch"); },
                        [](const cmd::Start&) { return std::string_view("start"); },
                        [](const cmd::Stop&) { return std::string_view("stop"); },
                        [](const cmd::Rescale&) { return std::string_view("rescale"); },
                        [](const cmd::ScheduleAllocation&) { return std::string_view("schedule"); },
                        [](const cmd::Status&) { return std::string_view("status"); },
                        [](const cmd::VolumeCreate&) { return std::string_view("volume_create"); },
                        [](const cmd::VolumeResize&) { return std::string_view("volume_resize"); },
                        [](const cmd::VolumeDelete&) { return std::string_view("volume_delete"); },
                        [](const cmd::VolumeAttach&) { return std::string_view("volume_attach"); },
                        [](const cmd::VolumeDetach&) { return std::string_view("volume_detach"); },
                        [](const cmd::SnapshotCreate&) { return std::string_view("snapshot"); },
                    },
                    c);
}

Json command_to_json(const Command& c) {
  Json j = std::visit(
      Overloaded{
          [](const cmd::Launch& x) {
            return Json{{"definition", definition_to_json(x.definition)}, {"parent", x.parent}, {"owner", x.owner}};
          },
          [](const cmd::Start& x) { return Json{{"uuid", x.uuid.hex()}}; },
          [](const cmd::Stop& x) { return Json{{"uuid", x.uuid.hex()}}; },
          [](const cmd::Rescale& x) { return Json{{"uuid", x.uuid.hex()}, {"resources", resources_to_json(x.resources)}}; },
          [](const cmd::ScheduleAllocation& x) {
            return Json{{"definition", definition_to_json(x.definition)},
                        {"parent", x.parent},
                        {"start_time", x.start_time},
                        {"duration_s", x.duration_s},
                        {"owner", x.owner}};
          },
          [](const cmd::Status&) { return Json::object(); },
          [](const cmd::VolumeCreate& x) { return Json{{"size_gib", x.size_gib}, {"host", x.host}}; },
          [](const cmd::VolumeResize& x) { return Json{{"volume_id", x.volume_id}, {"size_gib", x.size_gib}}; },
          [](const cmd::VolumeDelete& x) { return Json{{"volume_id", x.volume_id}}; },
          [](const cmd::VolumeAttach& x) { return Json{{"volume_id", x.volume_id}, {"vm", x.vm.hex()}}; },
          [](const cmd::VolumeDetach& x) { return Json{{"volume_id", x.volume_id}}; },
          [](const cmd::SnapshotCreate& x) { return Json{{"vm", x.vm.hex()}, {"volume_id", x.volume_id}}; },
      },
      c);
  j["type"] = std::string(command_type(c));
  return j;
}

Command command_from_json(const Json& j) {
  const std::string type = string_field(j, "type");
  if (type == "launch") {
    return cmd::Launch{definition_from_json(field(j, "definition")),
                       optional_string(j, "parent", std::string(kRootHostId)), optional_string(j, "owner", "")};
  }
  if (type == "start") return cmd::Start{uuid_field(j, "uuid")};
  if (type == "stop") return cmd::Stop{uuid_field(j, "uuid")};
  if (type == "rescale") return cmd::Rescale{uuid_field(j, "uuid"), resources_from_json(field(j, "resources"))};
  if (type == "schedule") {
    return cmd::ScheduleAllocation{definition_from_json(field(j, "definition")),
                                   optional_string(j, "parent", std::string(kRootHostId)),
                                   int_field(j, "start_time"), int_field(j, "duration_s"),
                                   optional_string(j, "owner", "")};
  }
  if (type == "status") return cmd::Status{};
  if (type == "volume_create") {
    return cmd::VolumeCreate{int_field(j, "size_gib"), optional_string(j, "host", std::string(kRootHostId))};
  }
  if (type == "volume_resize") return cmd::VolumeResize{int_field(j, "volume_id"), int_field(j, "size_gib")};
  if (type == "volume_delete") return cmd::VolumeDelete{int_field(j, "volume_id")};
  if (type == "volume_attach") return cmd::VolumeAttach{int_field(j, "volume_id"), uuid_field(j, "vm")};
  if (type == "volume_detach") return cmd::VolumeDetach{int_field(j, "volume_id")};
  if (type == "snapshot") return cmd::SnapshotCreate{uuid_field(j, "vm"), int_field(j, "volume_id")};
  throw Error(ErrorCode::InvalidArgument, "type");
}

}  // namespace nestery
