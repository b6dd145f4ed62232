#pragma once

namespace flowcache {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace flowcache
