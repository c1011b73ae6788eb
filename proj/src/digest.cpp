#include "zfda/digest.hpp"

#include <openssl/evp.h>

#include <stdexcept>

#include "zfda/common.hpp"
#include "zfda/model.hpp"

namespace zfda {

Sha256 sha256(const uint8_t* data, size_t len) {
    Sha256 out{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != out.size())
        throw Error("sha256: digest computation failed");
    return out;
}

Sha256 sha256(const std::vector<uint8_t>& data) { return sha256(data.data(), data.size()); }

Sha256 model_digest(const ModelParams& model) { return sha256(canonical_param_bytes(model)); }

std::string digest_hex(const Sha256& d) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : d) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

Sha256 digest_from_hex(const std::string& hex) {
    if (hex.size() != 64) throw DataError("digest hex must be 64 chars, got " + std::to_string(hex.size()));
    auto nib = [](char c) -> uint8_t {
        if (c >= '0' && c <= '9') return static_cast<uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<uint8_t>(c - 'A' + 10);
        throw DataError("bad hex digit in digest");
    };
    Sha256 d{};
    for (size_t i = 0; i < 32; ++i) d[i] = static_cast<uint8_t>((nib(hex[2 * i]) << 4) | nib(hex[2 * i + 1]));
    return d;
}

}  // namespace zfda
