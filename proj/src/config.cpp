#include "evansbif/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "evansbif/errors.hpp"

namespace evansbif::config {

namespace {

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    std::map<std::string, Value, std::less<>> run() {
        std::map<std::string, Value, std::less<>> out;
        std::string section;
        for (;;) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++pos_;
                section = read_key();
                skip_spaces();
                expect(']');
                end_of_line();
                continue;
            }
            std::string key = read_key();
            skip_spaces();
            expect('=');
            skip_spaces();
            Value v = read_value();
            end_of_line();
            const std::string full = section.empty() ? key : section + "." + key;
            if (out.count(full)) fail("duplicate key '" + full + "'");
            out.emplace(full, std::move(v));
        }
        return out;
    }

private:
    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError("config line " + std::to_string(line()) + ": " + message);
    }

    std::size_t line() const {
        std::size_t n = 1;
        for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i)
            if (text_[i] == '\n') ++n;
        return n;
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
    }

    void skip_comment() {
        if (!eof() && peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }

    void skip_blank_lines() {
        for (;;) {
            skip_spaces();
            skip_comment();
            if (!eof() && peek() == '\n') {
                ++pos_;
                continue;
            }
            return;
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_insignificant() {
        for (;;) {
            skip_spaces();
            skip_comment();
            if (!eof() && peek() == '\n') {
                ++pos_;
                continue;
            }
            return;
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (eof()) return;
        if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
        ++pos_;
    }

    void expect(char c) {
        if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string read_key() {
        std::string key;
        for (;;) {
            skip_spaces();
            const std::size_t start = pos_;
            while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
            if (pos_ == start) fail("expected a key");
            key.append(text_.substr(start, pos_ - start));
            skip_spaces();
            if (!eof() && peek() == '.') {
                ++pos_;
                key += '.';
                continue;
            }
            return key;
        }
    }

    Value read_value() {
        if (eof()) fail("missing value");
        const char c = peek();
        if (c == '"') return Value{read_string()};
        if (c == '[') return Value{read_array()};
        if (text_.substr(pos_, 4) == "true") {
            pos_ += 4;
            return Value{true};
        }
        if (text_.substr(pos_, 5) == "false") {
            pos_ += 5;
            return Value{false};
        }
        return Value{read_number()};
    }

    std::string read_string() {
        expect('"');
        std::string s;
        for (;;) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = text_[pos_++];
            if (c == '"') return s;
            if (c == '\\') {
                if (eof()) fail("unterminated escape");
                const char e = text_[pos_++];
                switch (e) {
                case '"': s += '"'; break;
                case '\\': s += '\\'; break;
                case 'n': s += '\n'; break;
                case 't': s += '\t'; break;
                default: fail(std::string("unsupported escape '\\") + e + "'");
                }
                continue;
            }
            s += c;
        }
    }

    double read_number() {
        const std::size_t start = pos_;
        if (!eof() && (peek() == '+' || peek() == '-')) ++pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '.' || peek() == '_' ||
                          ((peek() == '+' || peek() == '-') && (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
            ++pos_;
        std::string token(text_.substr(start, pos_ - start));
        std::erase(token, '_');
        if (token.empty()) fail("expected a value");
        const char* first = token.data();
        if (*first == '+') ++first;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size()) fail("malformed number '" + token + "'");
        return v;
    }

    Array read_array() {
        expect('[');
        Array items;
        for (;;) {
            skip_insignificant();
            if (eof()) fail("unterminated array");
            if (peek() == ']') {
                ++pos_;
                return items;
            }
            items.push_back(read_value());
            skip_insignificant();
            if (eof()) fail("unterminated array");
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() != ']') fail("expected ',' or ']' in array");
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

} // namespace

double Value::as_number(std::string_view key) const {
    if (!is_number()) throw ConfigError("'" + std::string(key) + "' must be a number");
    return std::get<double>(data);
}

const std::string& Value::as_string(std::string_view key) const {
    if (!is_string()) throw ConfigError("'" + std::string(key) + "' must be a string");
    return std::get<std::string>(data);
}

const Array& Value::as_array(std::string_view key) const {
    if (!is_array()) throw ConfigError("'" + std::string(key) + "' must be an array");
    return std::get<Array>(data);
}

Document Document::parse(std::string_view text) {
    Document doc;
    doc.entries_ = Reader(text).run();
    return doc;
}

Document Document::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool Document::contains(std::string_view key) const {
    return entries_.find(key) != entries_.end();
}

const Value& Document::at(std::string_view key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing key '" + std::string(key) + "'");
    return it->second;
}

double Document::number(std::string_view key) const {
    return at(key).as_number(key);
}

double Document::number_or(std::string_view key, double fallback) const {
    return contains(key) ? number(key) : fallback;
}

std::string Document::string(std::string_view key) const {
    return at(key).as_string(key);
}

std::vector<double> Document::numbers(std::string_view key) const {
    std::vector<double> out;
    for (const auto& v : at(key).as_array(key)) out.push_back(v.as_number(key));
    return out;
}

std::vector<std::string> Document::strings(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& v : at(key).as_array(key)) {
        if (v.is_array()) {
            for (const auto& inner : v.as_array(key)) out.push_back(inner.as_string(key));
        } else {
            out.push_back(v.as_string(key));
        }
    }
    return out;
}

} // namespace evansbif::config
