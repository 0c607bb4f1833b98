#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cge {

// Flat `key = value` text: one assignment per line, `#` starts a comment,
// blank lines ignored. Keys are unique; later set() calls overwrite, which is
// how command-line flags override file values. serialize() emits entries in
// insertion order, so a parsed-then-serialized config is stable.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);      // ConfigError on bad syntax
    static KeyValueConfig from_file(const std::string& path);  // IoError if unreadable

    std::string serialize() const;

    bool has(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double v);
    void set_int(const std::string& key, std::int64_t v);
    void set_u64(const std::string& key, std::uint64_t v);
    void set_bool(const std::string& key, bool v);
    void set_int_list(const std::string& key, const std::vector<int>& v);  // comma joined

    // typed getters throw ConfigError when the key is missing (no-default
    // form) or the value fails to parse as the requested type
    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

private:
    const std::string* find(const std::string& key) const;
    std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace cge
