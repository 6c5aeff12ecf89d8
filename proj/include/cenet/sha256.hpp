#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace cenet {

/// Hex digest of a byte buffer (used for freeze-integrity checks on
/// parameter blocks).
std::string sha256_hex(const void* data, std::size_t len);

}  // namespace cenet
