#pragma once

namespace lobcast {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace lobcast
