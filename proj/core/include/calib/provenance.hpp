#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace calib {

/// Attached to every file the tools write. Deliberately has no timestamp so
/// reruns over identical inputs produce identical bytes.
struct Provenance {
  std::string tool = "calib";
  std::string version;
  std::string config_hash;  // 16 hex digits
  std::uint64_t seed = 0;
};

/// Library version baked in at build time.
std::string library_version();

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

Provenance make_provenance(std::string_view config_text, std::uint64_t seed);

}  // namespace calib
