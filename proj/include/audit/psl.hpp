#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "audit/psl_snapshot.hpp"
#include "audit/util.hpp"

namespace audit {

// Public-suffix matcher implementing the publicsuffix.org algorithm:
// the prevailing rule is the matching exception rule if any, else the
// matching rule with the most labels, else "*". Registrable domain
// (eTLD+1) is the public suffix plus one label.
class PublicSuffixList {
public:
    static PublicSuffixList parse(std::string_view text) {
        PublicSuffixList psl;
        std::size_t start = 0;
        while (start <= text.size()) {
            auto nl = text.find('\n', start);
            std::string_view line = text.substr(
                start, nl == std::string_view::npos ? nl : nl - start);
            start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

            line = trim(line);
            if (line.empty()) continue;
            if (line.starts_with("//")) {
                if (auto pos = line.find("VERSION:"); pos != std::string_view::npos && psl.version_.empty())
                    psl.version_ = std::string(trim(line.substr(pos + 8)));
                continue;
            }
            std::string rule = to_lower(line);
            if (rule.starts_with('!')) {
                psl.exceptions_.insert(rule.substr(1));
            } else if (rule.starts_with("*.")) {
                psl.wildcard_bases_.insert(rule.substr(2));
            } else {
                psl.exact_.insert(std::move(rule));
            }
        }
        return psl;
    }

    static const PublicSuffixList& bundled() {
        static const PublicSuffixList psl = parse(detail::kPublicSuffixSnapshot);
        return psl;
    }

    const std::string& version() const { return version_; }

    // Number of labels in the public suffix of `host`, or nullopt for
    // malformed hostnames. `host` must already be lowercase without a
    // trailing dot.
    std::optional<std::size_t> public_suffix_labels(const std::vector<std::string>& labels) const {
        const std::size_t n = labels.size();
        if (n == 0) return std::nullopt;

        std::size_t best_exception = 0; // label count of longest matching exception
        std::size_t best_rule = 0;      // label count of longest matching normal rule
        std::string suffix;
        for (std::size_t i = n; i-- > 0;) {
            // suffix = labels[i..n)
            if (suffix.empty())
                suffix = labels[i];
            else
                suffix = labels[i] + "." + suffix;
            const std::size_t count = n - i;
            if (exceptions_.count(suffix)) best_exception = std::max(best_exception, count);
            if (exact_.count(suffix)) best_rule = std::max(best_rule, count);
            // "*.base" matches one extra label on top of base
            if (count >= 2) {
                std::string base = suffix.substr(labels[i].size() + 1);
                if (wildcard_bases_.count(base)) best_rule = std::max(best_rule, count);
            }
        }
        if (best_exception > 0) return best_exception - 1;
        if (best_rule > 0) return best_rule;
        return 1; // prevailing rule "*"
    }

    bool is_public_suffix(std::string_view host) const {
        auto labels = normalize_labels(host);
        if (!labels) return false;
        auto ps = public_suffix_labels(*labels);
        return ps && *ps == labels->size();
    }

    // eTLD+1, or why it cannot be computed. IP literals pass through unchanged.
    std::string registrable_domain(std::string_view host) const {
        if (host.empty()) throw AuditError("registrable_domain: empty hostname");
        if (is_ip_literal(host)) return std::string(host);
        auto labels = normalize_labels(host);
        if (!labels) throw AuditError("registrable_domain: malformed hostname: " + std::string(host));
        auto ps = public_suffix_labels(*labels);
        if (!ps) throw AuditError("registrable_domain: malformed hostname: " + std::string(host));
        if (*ps >= labels->size())
            throw AuditError("registrable_domain: suffix-only host: " + std::string(host));
        std::string out;
        for (std::size_t i = labels->size() - *ps - 1; i < labels->size(); ++i) {
            if (!out.empty()) out += '.';
            out += (*labels)[i];
        }
        return out;
    }

    std::optional<std::string> try_registrable_domain(std::string_view host) const {
        if (host.empty()) return std::nullopt;
        if (is_ip_literal(host)) return std::string(host);
        auto labels = normalize_labels(host);
        if (!labels) return std::nullopt;
        auto ps = public_suffix_labels(*labels);
        if (!ps || *ps >= labels->size()) return std::nullopt;
        std::string out;
        for (std::size_t i = labels->size() - *ps - 1; i < labels->size(); ++i) {
            if (!out.empty()) out += '.';
            out += (*labels)[i];
        }
        return out;
    }

    static bool is_ip_literal(std::string_view host) {
        if (host.find(':') != std::string_view::npos) return true; // IPv6
        int octets = 0;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= host.size(); ++i) {
            if (i == host.size() || host[i] == '.') {
                std::string_view part = host.substr(start, i - start);
                if (part.empty() || part.size() > 3) return false;
                int v = 0;
                for (char c : part) {
                    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
                    v = v * 10 + (c - '0');
                }
                if (v > 255) return false;
                ++octets;
                start = i + 1;
            }
        }
        return octets == 4;
    }

private:
    static std::optional<std::vector<std::string>> normalize_labels(std::string_view host) {
        std::string h = to_lower(host);
        if (!h.empty() && h.back() == '.') h.pop_back();
        if (h.empty()) return std::nullopt;
        auto labels = split(h, '.');
        for (const auto& l : labels)
            if (l.empty()) return std::nullopt;
        return labels;
    }

    std::unordered_set<std::string> exact_;
    std::unordered_set<std::string> wildcard_bases_;
    std::unordered_set<std::string> exceptions_;
    std::string version_;
};

// Convenience wrapper over the bundled snapshot.
inline std::string registrable_domain(std::string_view host) {
    return PublicSuffixList::bundled().registrable_domain(host);
}

} // namespace audit
