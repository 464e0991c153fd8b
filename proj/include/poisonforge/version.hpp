#pragma once

namespace poisonforge {

inline constexpr const char* kVersion = "0.3.0";

} // namespace poisonforge
