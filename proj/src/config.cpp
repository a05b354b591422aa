#include "cr/config.hpp"

#include <algorithm>
#include <cstdio>

#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/rng.hpp"

namespace cr {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    return std::all_of(key.begin(), key.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '.' || c == '-' || c == '@';
    });
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source_name) {
    Config config;
    config.source_name_ = source_name;
    const std::vector<std::string> lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = trim(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        const std::string where = source_name + ":" + std::to_string(i + 1);
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value', got '" + lines[i] + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
        if (config.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        config.entries_.emplace_back(key, value);
    }
    return config;
}

Config Config::load(const std::string& path) { return parse(read_file(path), path); }

std::string Config::serialize() const {
    std::string out;
    for (const auto& [key, value] : entries_) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    }
    return out;
}

void Config::save(const std::string& path) const { write_file_atomic(path, serialize()); }

bool Config::has(std::string_view key) const { return lookup(key) != nullptr; }

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError("config: invalid key '" + key + "'");
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

const std::string* Config::lookup(std::string_view key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return &v;
    return nullptr;
}

std::string Config::get_string(std::string_view key) const {
    const std::string* v = lookup(key);
    if (!v) throw ConfigError(source_name_ + ": missing key '" + std::string(key) + "'");
    return *v;
}

std::string Config::get_string_or(std::string_view key, const std::string& fallback) const {
    const std::string* v = lookup(key);
    return v ? *v : fallback;
}

double Config::get_real(std::string_view key) const {
    return parse_real(get_string(key), source_name_ + " key '" + std::string(key) + "'");
}

double Config::get_real_or(std::string_view key, double fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    return parse_real(*v, source_name_ + " key '" + std::string(key) + "'");
}

std::int64_t Config::get_int(std::string_view key) const {
    return parse_int(get_string(key), source_name_ + " key '" + std::string(key) + "'");
}

std::int64_t Config::get_int_or(std::string_view key, std::int64_t fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    return parse_int(*v, source_name_ + " key '" + std::string(key) + "'");
}

bool Config::get_bool_or(std::string_view key, bool fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    throw ConfigError(source_name_ + " key '" + std::string(key) +
                      "': expected true or false, got '" + *v + "'");
}

void Config::require_known_keys(std::span<const std::string_view> allowed) const {
    for (const auto& [key, value] : entries_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(source_name_ + ": unknown key '" + key + "'");
    }
}

std::string Config::digest() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(serialize())));
    return buf;
}

}  // namespace cr
