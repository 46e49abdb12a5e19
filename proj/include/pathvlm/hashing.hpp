#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pathvlm {

// SHA-256 hex digest of a byte buffer (OpenSSL-backed).
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

// Digest of a file's contents. Throws std::runtime_error if unreadable.
std::string sha256_file(const std::filesystem::path& p);

}  // namespace pathvlm
