#pragma once

namespace rftwin {

inline constexpr const char* kVersion = "0.1.0";
// Bumped when an on-disk format changes shape.
inline constexpr int kLogFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

}  // namespace rftwin
