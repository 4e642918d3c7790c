#pragma once

namespace dispute {

inline constexpr const char* kVersion = "0.1.0";

// Version tag of the shipped label schema; bumped whenever the canonical
// label list or its published aliases change.
inline constexpr const char* kSchemaVersion = "wikitactics-v1";

}  // namespace dispute
