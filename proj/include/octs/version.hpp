#pragma once

namespace octs {

inline constexpr const char* kToolkitVersion = "0.1.0";

} // namespace octs
