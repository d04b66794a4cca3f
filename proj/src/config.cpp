#include "tagtopo/config.hpp"

#include "tagtopo/errors.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace tagtopo {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// cut a # comment, respecting double-quoted strings
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

std::string parse_quoted(const std::string& raw, const std::string& where) {
    if (raw.size() < 2 || raw.back() != '"')
        throw ConfigError(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 2 < raw.size()) {
            const char n = raw[++i];
            switch (n) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '"': out.push_back('"'); break;
            case '\\': out.push_back('\\'); break;
            default: throw ConfigError(where + ": unknown escape \\" + std::string(1, n));
            }
        } else {
            out.push_back(c);
        }
    }
    return out;
}

TomlValue parse_scalar(const std::string& raw, const std::string& where) {
    TomlValue out;
    if (raw.empty()) throw ConfigError(where + ": empty value");
    if (raw.front() == '"') {
        out.v = parse_quoted(raw, where);
        return out;
    }
    if (raw == "true" || raw == "false") {
        out.v = (raw == "true");
        return out;
    }
    // number: integer when it looks like one, float otherwise
    const bool has_float_bits = raw.find_first_of(".eE") != std::string::npos;
    try {
        std::size_t used = 0;
        if (!has_float_bits) {
            const std::int64_t i = std::stoll(raw, &used);
            if (used == raw.size()) {
                out.v = i;
                return out;
            }
        } else {
            const double d = std::stod(raw, &used);
            if (used == raw.size()) {
                out.v = d;
                return out;
            }
        }
    } catch (...) {
    }
    throw ConfigError(where + ": cannot parse value '" + raw + "'");
}

TomlValue parse_array(const std::string& raw, const std::string& where) {
    // raw excludes the surrounding brackets
    std::vector<std::string> items;
    std::string cur;
    bool in_string = false;
    for (char c : raw) {
        if (c == '"') in_string = !in_string;
        if (c == ',' && !in_string) {
            items.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) items.push_back(trim(cur));

    TomlValue out;
    if (items.empty()) {
        out.v = std::vector<double>{};
        return out;
    }
    if (items.front().front() == '"') {
        std::vector<std::string> strs;
        for (const auto& item : items) strs.push_back(parse_quoted(item, where));
        out.v = std::move(strs);
    } else {
        std::vector<double> nums;
        for (const auto& item : items) {
            const TomlValue v = parse_scalar(item, where);
            if (std::holds_alternative<double>(v.v))
                nums.push_back(std::get<double>(v.v));
            else if (std::holds_alternative<std::int64_t>(v.v))
                nums.push_back(double(std::get<std::int64_t>(v.v)));
            else
                throw ConfigError(where + ": arrays hold numbers or strings only");
        }
        out.v = std::move(nums);
    }
    return out;
}

bool valid_key(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.')
            return false;
    return true;
}

} // namespace

ConfigTable ConfigTable::parse_string(const std::string& text, const std::string& origin) {
    ConfigTable table;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated table header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section)) throw ConfigError(where + ": bad table name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (!valid_key(key)) throw ConfigError(where + ": bad key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.values_.count(full)) throw ConfigError(where + ": duplicate key " + full);
        if (!raw.empty() && raw.front() == '[') {
            if (raw.back() != ']') throw ConfigError(where + ": unterminated array");
            table.values_[full] = parse_array(raw.substr(1, raw.size() - 2), where);
        } else {
            table.values_[full] = parse_scalar(raw, where);
        }
    }
    return table;
}

ConfigTable ConfigTable::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

const TomlValue& ConfigTable::require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

std::string ConfigTable::get_string(const std::string& key) const {
    const auto& v = require(key);
    if (!std::holds_alternative<std::string>(v.v))
        throw ConfigError("config key " + key + " is not a string");
    return std::get<std::string>(v.v);
}
std::string ConfigTable::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::int64_t ConfigTable::get_int(const std::string& key) const {
    const auto& v = require(key);
    if (std::holds_alternative<std::int64_t>(v.v)) return std::get<std::int64_t>(v.v);
    throw ConfigError("config key " + key + " is not an integer");
}
std::int64_t ConfigTable::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double ConfigTable::get_double(const std::string& key) const {
    const auto& v = require(key);
    if (std::holds_alternative<double>(v.v)) return std::get<double>(v.v);
    if (std::holds_alternative<std::int64_t>(v.v))
        return double(std::get<std::int64_t>(v.v));
    throw ConfigError("config key " + key + " is not a number");
}
double ConfigTable::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool ConfigTable::get_bool(const std::string& key) const {
    const auto& v = require(key);
    if (!std::holds_alternative<bool>(v.v))
        throw ConfigError("config key " + key + " is not a boolean");
    return std::get<bool>(v.v);
}
bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<double> ConfigTable::get_double_array(const std::string& key) const {
    const auto& v = require(key);
    if (!std::holds_alternative<std::vector<double>>(v.v))
        throw ConfigError("config key " + key + " is not a numeric array");
    return std::get<std::vector<double>>(v.v);
}
std::vector<double> ConfigTable::get_double_array(const std::string& key,
                                                  const std::vector<double>& fallback) const {
    return has(key) ? get_double_array(key) : fallback;
}

std::vector<std::string> ConfigTable::get_string_array(const std::string& key) const {
    const auto& v = require(key);
    if (!std::holds_alternative<std::vector<std::string>>(v.v))
        throw ConfigError("config key " + key + " is not a string array");
    return std::get<std::vector<std::string>>(v.v);
}
std::vector<std::string> ConfigTable::get_string_array(
    const std::string& key, const std::vector<std::string>& fallback) const {
    return has(key) ? get_string_array(key) : fallback;
}

} // namespace tagtopo
