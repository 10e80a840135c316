#pragma once

namespace ghostlab {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace ghostlab
