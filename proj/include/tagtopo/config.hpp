#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace tagtopo {

/// Scalar or flat array value from the config file.
struct TomlValue {
    std::variant<std::string, std::int64_t, double, bool,
                 std::vector<std::string>, std::vector<double>>
        v;
};

/// Small TOML-subset reader: [table] headers, bare keys, strings, integers,
/// floats, booleans, flat arrays, and # comments. Keys are addressed as
/// "table.key".
class ConfigTable {
public:
    static ConfigTable parse_file(const std::string& path);
    static ConfigTable parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_array(const std::string& key) const;
    std::vector<double> get_double_array(const std::string& key,
                                         const std::vector<double>& fallback) const;
    std::vector<std::string> get_string_array(const std::string& key) const;
    std::vector<std::string> get_string_array(const std::string& key,
                                              const std::vector<std::string>& fallback) const;

    const std::map<std::string, TomlValue>& entries() const { return values_; }

private:
    const TomlValue& require(const std::string& key) const;
    std::map<std::string, TomlValue> values_;
};

} // namespace tagtopo
