#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evsurf {

/// SHA-256 digest of a byte buffer, as a lowercase hex string.
std::string sha256_hex(const void* data, std::size_t len);
inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

/// SHA-256 of a file's contents. Throws RuntimeFailure if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace evsurf
