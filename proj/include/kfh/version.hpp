#pragma once

namespace kfh {
inline constexpr const char* kVersion = "0.1.0";
}
