#include "calib/provenance.hpp"

#include <cstdio>

namespace calib {

std::string library_version() { return CALIB_VERSION; }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Provenance make_provenance(std::string_view config_text, std::uint64_t seed) {
  Provenance p;
  p.version = library_version();
  p.config_hash = fnv1a_hex(config_text);
  p.seed = seed;
  return p;
}

}  // namespace calib
