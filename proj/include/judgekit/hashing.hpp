#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace judgekit {

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

}  // namespace judgekit
