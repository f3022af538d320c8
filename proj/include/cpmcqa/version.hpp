#pragma once

namespace cpmcqa {

inline constexpr const char* kToolName = "conformal-mcqa";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace cpmcqa
