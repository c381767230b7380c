#pragma once

namespace fluxpea {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fluxpea
