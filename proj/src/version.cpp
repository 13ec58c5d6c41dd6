#include "flowmob/common.hpp"

#ifndef FLOWMOB_BUILD_VERSION
#define FLOWMOB_BUILD_VERSION "unknown"
#endif

namespace flowmob {

std::string_view build_version() { return FLOWMOB_BUILD_VERSION; }

}  // namespace flowmob
