#pragma once

namespace rsr {
inline constexpr const char* kVersion = "0.1.0";
}
