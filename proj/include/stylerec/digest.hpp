#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace stylerec {

/// FNV-1a 64-bit, rendered as "fnv1a64:<16 hex digits>". Identifies model
/// and corpus files in reports; not a cryptographic hash.
inline std::string content_digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace stylerec
