#ifndef CR_CONFIG_HPP
#define CR_CONFIG_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cr {

/**
 * Ordered `key = value` document. Parsing accepts blank lines and '#'
 * comments; serialization is canonical (one "key = value\n" per entry in
 * insertion order), so write -> read -> write is byte-identical. Duplicate
 * keys are rejected.
 */
class Config {
public:
    static Config parse(const std::string& text, const std::string& source_name);
    static Config load(const std::string& path);

    std::string serialize() const;
    void save(const std::string& path) const;

    bool has(std::string_view key) const;
    void set(const std::string& key, const std::string& value);

    // Getters throw ConfigError when the key is absent; the *_or forms
    // substitute a default instead.
    std::string get_string(std::string_view key) const;
    std::string get_string_or(std::string_view key, const std::string& fallback) const;
    double get_real(std::string_view key) const;
    double get_real_or(std::string_view key, double fallback) const;
    std::int64_t get_int(std::string_view key) const;
    std::int64_t get_int_or(std::string_view key, std::int64_t fallback) const;
    bool get_bool_or(std::string_view key, bool fallback) const;

    // Fail-closed surface: rejects any present key outside `allowed`.
    void require_known_keys(std::span<const std::string_view> allowed) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }

    // FNV-1a of the canonical serialization, as 16 hex digits.
    std::string digest() const;

private:
    const std::string* lookup(std::string_view key) const;

    std::string source_name_ = "<config>";
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace cr

#endif
