#pragma once

namespace recatom {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace recatom
