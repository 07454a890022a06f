#pragma once

#ifndef AUGREG_VERSION
#define AUGREG_VERSION "1.0.0"
#endif

namespace augreg {

inline constexpr const char* kVersion = AUGREG_VERSION;

}  // namespace augreg
