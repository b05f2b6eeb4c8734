#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audit/util.hpp"

namespace audit {

// Minimal absolute-URL splitter. Covers scheme://[userinfo@]host[:port]/path?query#fragment,
// which is all crawl logs contain; no normalization beyond lowercasing scheme and host.
struct Url {
    std::string scheme;
    std::string host;   // lowercase; IPv6 literals keep their brackets stripped
    std::string port;
    std::string path;     // leading '/' included when present
    std::string query;    // without '?'
    std::string fragment; // without '#'
};

inline std::optional<Url> parse_url(std::string_view s) {
    Url u;
    auto scheme_end = s.find("://");
    if (scheme_end == std::string_view::npos || scheme_end == 0) return std::nullopt;
    for (char c : s.substr(0, scheme_end)) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.')
            return std::nullopt;
    }
    u.scheme = to_lower(s.substr(0, scheme_end));
    std::string_view rest = s.substr(scheme_end + 3);

    auto authority_end = rest.find_first_of("/?#");
    std::string_view authority = rest.substr(0, authority_end);
    rest = authority_end == std::string_view::npos ? std::string_view{} : rest.substr(authority_end);

    if (auto at = authority.rfind('@'); at != std::string_view::npos)
        authority = authority.substr(at + 1);
    if (authority.empty()) return std::nullopt;

    if (authority.front() == '[') { // IPv6 literal
        auto close = authority.find(']');
        if (close == std::string_view::npos) return std::nullopt;
        u.host = to_lower(authority.substr(1, close - 1));
        if (close + 1 < authority.size()) {
            if (authority[close + 1] != ':') return std::nullopt;
            u.port = std::string(authority.substr(close + 2));
        }
    } else {
        auto colon = authority.rfind(':');
        if (colon != std::string_view::npos) {
            u.host = to_lower(authority.substr(0, colon));
            u.port = std::string(authority.substr(colon + 1));
        } else {
            u.host = to_lower(authority);
        }
    }
    if (u.host.empty()) return std::nullopt;

    if (!rest.empty() && rest.front() == '/') {
        auto path_end = rest.find_first_of("?#");
        u.path = std::string(rest.substr(0, path_end));
        rest = path_end == std::string_view::npos ? std::string_view{} : rest.substr(path_end);
    }
    if (!rest.empty() && rest.front() == '?') {
        auto q_end = rest.find('#');
        u.query = std::string(rest.substr(1, q_end == std::string_view::npos ? q_end : q_end - 1));
        rest = q_end == std::string_view::npos ? std::string_view{} : rest.substr(q_end);
    }
    if (!rest.empty() && rest.front() == '#') u.fragment = std::string(rest.substr(1));
    return u;
}

inline bool is_absolute_url(std::string_view s) { return parse_url(s).has_value(); }

// Raw key=value pairs, no percent-decoding. Values may contain '='.
inline std::vector<std::pair<std::string, std::string>> query_pairs(std::string_view query) {
    std::vector<std::pair<std::string, std::string>> out;
    if (query.empty()) return out;
    for (const auto& piece : split(query, '&')) {
        if (piece.empty()) continue;
        auto eq = piece.find('=');
        if (eq == std::string::npos)
            out.emplace_back(piece, "");
        else
            out.emplace_back(piece.substr(0, eq), piece.substr(eq + 1));
    }
    return out;
}

inline std::vector<std::string> path_segments(std::string_view path) {
    std::vector<std::string> out;
    for (const auto& seg : split(path, '/'))
        if (!seg.empty()) out.push_back(seg);
    return out;
}

inline bool is_unreserved_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' || c == '~';
}

inline std::string percent_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (is_unreserved_char(static_cast<char>(c))) {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        }
    }
    return out;
}

inline std::string percent_decode(std::string_view s) {
    auto hexval = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            int hi = hexval(s[i + 1]), lo = hexval(s[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out += static_cast<char>(hi * 16 + lo);
                i += 2;
                continue;
            }
        }
        out += s[i];
    }
    return out;
}

} // namespace audit
