#pragma once

namespace irsnoma {

inline constexpr const char* kVersion = "0.1.0";
/// First line of every CSV the project writes.
inline constexpr const char* kCsvHeader = "# irsnoma-lab v0.1.0";

}  // namespace irsnoma
