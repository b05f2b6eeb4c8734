#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "audit/util.hpp"

namespace audit {

inline std::string hex_encode(const unsigned char* data, std::size_t len) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out += hex[data[i] >> 4];
        out += hex[data[i] & 0xF];
    }
    return out;
}

inline std::string evp_digest_hex(std::string_view s, const EVP_MD* md) {
    unsigned char buf[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(s.data(), s.size(), buf, &len, md, nullptr))
        throw AuditError("digest computation failed");
    return hex_encode(buf, len);
}

inline std::string md5_hex(std::string_view s) { return evp_digest_hex(s, EVP_md5()); }
inline std::string sha1_hex(std::string_view s) { return evp_digest_hex(s, EVP_sha1()); }
inline std::string sha256_hex(std::string_view s) { return evp_digest_hex(s, EVP_sha256()); }

inline std::string base64_encode(std::string_view s, bool pad = true) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((s.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= s.size()) {
        std::uint32_t v = (static_cast<unsigned char>(s[i]) << 16) |
                          (static_cast<unsigned char>(s[i + 1]) << 8) |
                          static_cast<unsigned char>(s[i + 2]);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
        i += 3;
    }
    std::size_t rem = s.size() - i;
    if (rem == 1) {
        std::uint32_t v = static_cast<unsigned char>(s[i]) << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        if (pad) out += "==";
    } else if (rem == 2) {
        std::uint32_t v = (static_cast<unsigned char>(s[i]) << 16) |
                          (static_cast<unsigned char>(s[i + 1]) << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        if (pad) out += '=';
    }
    return out;
}

} // namespace audit
