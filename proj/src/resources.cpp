#include "nestery/resources.hpp"

#include "nestery/error.hpp"

namespace nestery {

std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Cores:
      return "cores";
    case Dimension::Ram:
      return "ram";
    case Dimension::Disk:
      return "disk";
    case Dimension::Nics:
      return "nics";
  }
  return "?";
}

std::int64_t ResourceVector::get(Dimension d) const {
  switch (d) {
    case Dimension::Cores:
      return cpu_cores;
    case Dimension::Ram:
      return ram_mib;
    case Dimension::Disk:
      return disk_gib;
    case Dimension::Nics:
      return nics;
  }
  return 0;
}

void ResourceVector::set(Dimension d, std::int64_t value) {
  switch (d) {
    case Dimension::Cores:
      cpu_cores = value;
      break;
    case Dimension::Ram:
      ram_mib = value;
      break;
    case Dimension::Disk:
      disk_gib = value;
      break;
    case Dimension::Nics:
      nics = value;
      break;
  }
}

void ResourceVector::validate() const {
  if (cpu_cores < kMinCores) throw Error(ErrorCode::InvariantViolation, "cpu_cores");
  if (cpu_priority < kMinPriority || cpu_priority > kMaxPriority) {
    throw Error(ErrorCode::InvariantViolation, "cpu_priority");
  }
  if (ram_mib < kMinRamMib) throw Error(ErrorCode::InvariantViolation, "ram_mib");
  if (disk_gib < 0) throw Error(ErrorCode::InvariantViolation, "disk_gib");
  if (nics < 0) throw Error(ErrorCode::InvariantViolation, "nics");
}

bool ResourceVector::valid() const noexcept {
  return cpu_cores >= kMinCores && cpu_priority >= kMinPriority && cpu_priority <= kMaxPriority &&
         ram_mib >= kMinRamMib && disk_gib >= 0 && nics >= 0;
}

ResourceVector add_consumables(const ResourceVector& a, const ResourceVector& b) {
  ResourceVector out = a;
  for (auto d : kConsumableDimensions) out.set(d, a.get(d) + b.get(d));
  return out;
}

ResourceVector sub_consumables(const ResourceVector& a, const ResourceVector& b) {
  ResourceVector out = a;
  for (auto d : kConsumableDimensions) out.set(d, a.get(d) - b.get(d));
  return out;
}

std::optional<Dimension> first_shortfall(const ResourceVector& request, const ResourceVector& free) {
  for (auto d : kConsumableDimensions) {
    if (request.get(d) > free.get(d)) return d;
  }
  return std::nullopt;
}

bool vector_fits(const ResourceVector& request, const ResourceVector& free) {
  return !first_shortfall(request, free).has_value();
}

}  // namespace nestery
