#include "gmaw/kv_config.hpp"

#include "gmaw/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gmaw {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

double parse_number(std::string_view token) {
    token = trim(token);
    std::string normalized(token);
    if (std::count(normalized.begin(), normalized.end(), ',') == 1 &&
        normalized.find('.') == std::string::npos) {
        std::replace(normalized.begin(), normalized.end(), ',', '.');
    }
    if (!normalized.empty() && normalized.front() == '+') normalized.erase(0, 1);
    double value = 0.0;
    const char* begin = normalized.data();
    const char* end = begin + normalized.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (normalized.empty() || ec != std::errc{} || ptr != end) {
        throw ValidationError("not a number: '" + std::string(token) + "'");
    }
    return value;
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) return "nan";
    return {buf, ptr};
}

std::string format_fixed(double value, int precision) {
    char buf[128];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, precision);
    if (ec != std::errc{}) return format_number(value);
    return {buf, ptr};
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = std::string(trim(line.substr(0, eq)));
        auto value = trim(line.substr(eq + 1));
        if (const auto hash = value.find('#'); hash != std::string_view::npos) value = trim(value.substr(0, hash));
        if (key.empty()) throw ValidationError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (cfg.contains(key)) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        cfg.set(key, std::string(value));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

double KeyValueConfig::number(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError(origin_ + ": missing key '" + key + "'");
    try {
        return parse_number(it->second);
    } catch (const ValidationError& e) {
        throw ValidationError(origin_ + ": key '" + key + "': " + e.what());
    }
}

double KeyValueConfig::number_or(const std::string& key, double fallback) const {
    return contains(key) ? number(key) : fallback;
}

std::optional<double> KeyValueConfig::maybe_number(const std::string& key) const {
    if (!contains(key)) return std::nullopt;
    return number(key);
}

const std::string& KeyValueConfig::text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError(origin_ + ": missing key '" + key + "'");
    return it->second;
}

void KeyValueConfig::set(const std::string& key, std::string value) {
    if (values_.count(key) == 0) order_.push_back(key);
    values_[key] = std::move(value);
}

void KeyValueConfig::set(const std::string& key, double value) { set(key, format_number(value)); }

std::string KeyValueConfig::to_string() const {
    std::string out;
    for (const auto& key : order_) {
        out += key;
        out += " = ";
        out += values_.at(key);
        out += '\n';
    }
    return out;
}

}  // namespace gmaw
