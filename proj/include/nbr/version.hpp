#pragma once

namespace nbr {

inline constexpr const char* kToolkitVersion = "nbr 0.1.0";

}  // namespace nbr
