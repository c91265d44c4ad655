#pragma once

#include <string>
#include <string_view>

#include "nestery/vm.hpp"

namespace nestery {

// Canonical single-line VM definition document:
//   <vm uuid="HEX32" level="N"><name>NAME</name><resources cores="C"
//   priority="P" ram_mib="R" disk_gib="D" nics="I"/><image ref="REF"/></vm>
// Fixed element and attribute order, no insignificant whitespace, so equal
// definitions always produce equal bytes.
std::string serialize_definition(const VmDefinition& def);

// Throws MalformedDocument for anything outside the grammar above and
// InvariantViolation(field) when a well-formed document holds invalid values.
VmDefinition parse_definition(std::string_view doc);

}  // namespace nestery
