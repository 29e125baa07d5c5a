#pragma once

namespace reirl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace reirl
