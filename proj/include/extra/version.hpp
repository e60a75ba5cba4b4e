#pragma once

namespace extra {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace extra
