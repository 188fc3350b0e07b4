#pragma once

#include <cstdint>

namespace salfield::detail {

extern const std::uint16_t kMcEdgeTable[256];
extern const std::int8_t kMcTriTable[256][16];
extern const std::uint8_t kViridis[256][3];

}  // namespace salfield::detail
