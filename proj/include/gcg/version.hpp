#pragma once

namespace gcg {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace gcg
