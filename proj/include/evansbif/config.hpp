#pragma once

// Minimal reader for the TOML subset used by model files:
//   [section] / [section.sub] headers, dotted keys, `key = value` with
//   strings, numbers, booleans and (nested, possibly multi-line) arrays.
// Keys are flattened to their full dotted path, e.g. "model.rhs".

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace evansbif::config {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<double, std::string, bool, Array> data;

    bool is_number() const { return std::holds_alternative<double>(data); }
    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }

    double as_number(std::string_view key) const;
    const std::string& as_string(std::string_view key) const;
    const Array& as_array(std::string_view key) const;
};

class Document {
public:
    static Document parse(std::string_view text);
    static Document load(const std::string& path);

    bool contains(std::string_view key) const;
    const Value& at(std::string_view key) const;

    double number(std::string_view key) const;
    double number_or(std::string_view key, double fallback) const;
    std::string string(std::string_view key) const;
    std::vector<double> numbers(std::string_view key) const;
    /// Array of strings, or array of arrays of strings flattened row-major.
    std::vector<std::string> strings(std::string_view key) const;

    const std::map<std::string, Value, std::less<>>& entries() const { return entries_; }

private:
    std::map<std::string, Value, std::less<>> entries_;
};

} // namespace evansbif::config
