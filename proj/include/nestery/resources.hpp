#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace nestery {

using Seconds = std::int64_t;

// Consumable dimensions in the fixed order used for denial reporting.
enum class Dimension { Cores, Ram, Disk, Nics };

inline constexpr std::array<Dimension, 4> kConsumableDimensions{Dimension::Cores, Dimension::Ram,
                                                                Dimension::Disk, Dimension::Nics};

std::string_view dimension_name(Dimension d);

// The five resource dimensions of an allocation. cpu_priority is a
// scheduling weight: it never takes part in fit tests or capacity sums.
struct ResourceVector {
  std::int64_t cpu_cores = 1;
  std::int64_t cpu_priority = 512;
  std::int64_t ram_mib = 64;
  std::int64_t disk_gib = 0;
  std::int64_t nics = 0;

  static constexpr std::int64_t kMinCores = 1;
  static constexpr std::int64_t kMinPriority = 1;
  static constexpr std::int64_t kMaxPriority = 1024;
  static constexpr std::int64_t kMinRamMib = 64;

  std::int64_t get(Dimension d) const;
  void set(Dimension d, std::int64_t value);

  // Throws Error(InvariantViolation, field) on the first out-of-bounds field.
  void validate() const;
  bool valid() const noexcept;

  friend bool operator==(const ResourceVector&, const ResourceVector&) = default;
};

// Unchecked arithmetic on consumables; priority is taken from the left
// operand. Used for free-pool bookkeeping where values may drop to zero.
ResourceVector add_consumables(const ResourceVector& a, const ResourceVector& b);
ResourceVector sub_consumables(const ResourceVector& a, const ResourceVector& b);

// request ≼ free on every consumable dimension.
bool vector_fits(const ResourceVector& request, const ResourceVector& free);

// First dimension (cores→ram→disk→nics) where request exceeds free.
std::optional<Dimension> first_shortfall(const ResourceVector& request, const ResourceVector& free);

}  // namespace nestery
