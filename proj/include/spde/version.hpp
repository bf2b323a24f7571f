#pragma once

namespace spde {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace spde
