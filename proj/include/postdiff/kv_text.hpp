#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace postdiff {

// Sectioned key = value text (INI style). Keys before any section header
// belong to the section named "".
struct KvSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
};

std::vector<KvSection> parse_kv_text(const std::string& text);

std::string format_double(double v);          // shortest text that round-trips
double parse_double(const std::string& text, const std::string& key);
long long parse_int(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);
std::vector<double> parse_double_list(const std::string& text, const std::string& key);

// Error carrying the offending "section.key" name.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

}  // namespace postdiff
