#include "postdiff/kv_text.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <sstream>

namespace postdiff {

std::vector<KvSection> parse_kv_text(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("line " + std::to_string(e.line()), e.message());
    }
    std::vector<KvSection> sections;
    KvSection top{"", {}};
    for (const auto& [key, child] : tree) {
        if (child.empty()) {
            top.entries.emplace_back(key, child.data());
            continue;
        }
        KvSection s{key, {}};
        for (const auto& [k, v] : child) s.entries.emplace_back(k, v.data());
        sections.push_back(std::move(s));
    }
    if (!top.entries.empty()) sections.insert(sections.begin(), std::move(top));
    return sections;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& key) {
    double v       = 0.0;
    const char* b  = text.data();
    const char* e  = b + text.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v)) {
        throw ConfigError(key, "expected a number, got '" + text + "'");
    }
    return v;
}

long long parse_int(const std::string& text, const std::string& key) {
    long long v    = 0;
    const char* b  = text.data();
    const char* e  = b + text.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw ConfigError(key, "expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError(key, "expected true|false, got '" + text + "'");
}

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::string tok;
    std::istringstream in(text);
    while (std::getline(in, tok, ',')) {
        const auto b = tok.find_first_not_of(" \t");
        const auto e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) throw ConfigError(key, "empty list element");
        out.push_back(parse_double(tok.substr(b, e - b + 1), key));
    }
    return out;
}

}  // namespace postdiff
