#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace zfda {

struct ModelParams;

using Sha256 = std::array<uint8_t, 32>;

Sha256 sha256(const uint8_t* data, size_t len);
Sha256 sha256(const std::vector<uint8_t>& data);

// SHA-256 over the canonical parameter byte stream.
Sha256 model_digest(const ModelParams& model);

std::string digest_hex(const Sha256& d);
Sha256 digest_from_hex(const std::string& hex);

}  // namespace zfda
