#pragma once

namespace natsim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace natsim
