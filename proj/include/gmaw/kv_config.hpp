#pragma once

// Flat `key = value` text configs. Lines starting with '#' are comments.
// Numeric values may use a decimal comma ("0,016"); it is normalized on read.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gmaw {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, const std::string& origin = "<memory>");
    static KeyValueConfig load(const std::filesystem::path& path);

    [[nodiscard]] bool contains(const std::string& key) const { return values_.count(key) != 0; }
    [[nodiscard]] double number(const std::string& key) const;
    [[nodiscard]] double number_or(const std::string& key, double fallback) const;
    [[nodiscard]] std::optional<double> maybe_number(const std::string& key) const;
    [[nodiscard]] const std::string& text(const std::string& key) const;

    void set(const std::string& key, std::string value);
    void set(const std::string& key, double value);

    /// Keys in insertion order.
    [[nodiscard]] const std::vector<std::string>& keys() const { return order_; }

    /// Serializes in insertion order, one `key = value` per line.
    [[nodiscard]] std::string to_string() const;

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    std::string origin_;
};

/// Parses a real number, accepting a decimal comma. Throws ValidationError.
double parse_number(std::string_view token);

/// Shortest round-trip decimal representation (dot decimal, locale independent).
std::string format_number(double value);

/// Fixed-point representation with `precision` decimals (dot decimal).
std::string format_fixed(double value, int precision);

}  // namespace gmaw
