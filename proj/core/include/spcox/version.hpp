#pragma once

namespace spcox {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spcox
