#pragma once

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fracevol/error.hpp"
#include "fracevol/grid.hpp"

namespace fracevol {

/// Flat `key = value` text. Keys may carry dotted sections (model.a, forcing.kind);
/// `#` starts a comment; blank lines are ignored. A repeated key is an error.
class Config {
public:
    static Config parse(std::string_view text, const std::string& source = "config") {
        Config c;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            const std::string where = source + ":" + std::to_string(line_no);
            if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
            const auto key = trim(body.substr(0, eq));
            const auto value = trim(body.substr(eq + 1));
            if (key.empty()) throw ConfigError(where, "empty key");
            for (char ch : key)
                if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_'))
                    throw ConfigError(where, "invalid character in key '" + key + "'");
            if (c.values_.count(key)) throw ConfigError(key, "given twice (" + where + ")");
            c.values_[key] = value;
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path, "cannot open config file");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return std::string(s.substr(b, e - b + 1));
    }

    std::map<std::string, std::string> values_;
};

struct KeySpec {
    std::string key;
    std::string default_value;
    std::string help;
};

using Schema = std::vector<KeySpec>;

/// A config checked against a schema: unknown keys are rejected, missing keys take their
/// defaults, and typed getters report the offending key on malformed values.
class Settings {
public:
    Settings(const Config& config, Schema schema) : schema_(std::move(schema)) {
        for (const auto& [k, v] : config.values()) {
            const auto it = std::find_if(schema_.begin(), schema_.end(), [&](const KeySpec& s) { return s.key == k; });
            if (it == schema_.end()) throw ConfigError(k, "unknown key");
            values_[k] = v;
        }
        for (const auto& s : schema_)
            if (!values_.count(s.key)) values_[s.key] = s.default_value;
    }

    const std::string& text(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(key, "not part of this command's schema");
        return it->second;
    }

    double real(const std::string& key) const { return parse_real(key, text(key)); }

    std::int64_t integer(const std::string& key) const {
        const auto& s = text(key);
        std::int64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key, "expected an integer, got '" + s + "'");
        return v;
    }

    std::size_t count(const std::string& key, std::size_t min_value = 0) const {
        const auto v = integer(key);
        if (v < std::int64_t(min_value))
            throw ConfigError(key, "must be at least " + std::to_string(min_value) + ", got " + std::to_string(v));
        return std::size_t(v);
    }

    std::uint64_t seed(const std::string& key) const {
        const auto& s = text(key);
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
        return v;
    }

    bool flag(const std::string& key) const {
        const auto& s = text(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError(key, "expected true or false, got '" + s + "'");
    }

    /// Comma- or space-separated reals; empty text gives an empty list.
    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (const auto& tok : split(text(key), ", \t")) out.push_back(parse_real(key, tok));
        return out;
    }

    /// Rows separated by ';', entries by commas or spaces.
    Eigen::MatrixXd matrix(const std::string& key) const {
        std::vector<std::vector<double>> rows;
        for (const auto& row : split(text(key), ";")) {
            rows.emplace_back();
            for (const auto& tok : split(row, ", \t")) rows.back().push_back(parse_real(key, tok));
        }
        if (rows.empty()) throw ConfigError(key, "empty matrix");
        Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.front().size()) throw ConfigError(key, "matrix rows differ in length");
            for (std::size_t j = 0; j < rows[i].size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
        }
        return m;
    }

    std::string choice(const std::string& key, const std::vector<std::string>& allowed) const {
        const auto& s = text(key);
        if (std::find(allowed.begin(), allowed.end(), s) != allowed.end()) return s;
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError(key, "expected one of {" + list + "}, got '" + s + "'");
    }

    /// Hurst index; `analysis` additionally requires H >= 1/2.
    Hurst hurst(const std::string& key = "hurst", bool analysis = true) const {
        const double h = real(key);
        if (!(h > 0.0 && h < 1.0)) throw ConfigError(key, "must satisfy 0 < H < 1, got " + text(key));
        if (analysis && h < 0.5) throw ConfigError(key, "must satisfy 1/2 <= H < 1 for this command, got " + text(key));
        return Hurst(h);
    }

    double positive(const std::string& key) const {
        const double v = real(key);
        if (!(v > 0.0)) throw ConfigError(key, "must be positive, got " + text(key));
        return v;
    }

    /// Effective values in schema order (the config echo of run summaries).
    std::vector<std::pair<std::string, std::string>> echo() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& s : schema_) out.emplace_back(s.key, values_.at(s.key));
        return out;
    }

    const Schema& schema() const noexcept { return schema_; }

private:
    static double parse_real(const std::string& key, const std::string& s) {
        if (s.empty()) throw ConfigError(key, "expected a number, got nothing");
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
            throw ConfigError(key, "expected a finite number, got '" + s + "'");
        return v;
    }

    static std::vector<std::string> split(const std::string& s, const char* seps) {
        std::vector<std::string> out;
        std::size_t i = 0;
        while (i < s.size()) {
            const auto b = s.find_first_not_of(seps, i);
            if (b == std::string::npos) break;
            const auto e = s.find_first_of(seps, b);
            out.push_back(s.substr(b, e == std::string::npos ? std::string::npos : e - b));
            i = e == std::string::npos ? s.size() : e;
        }
        return out;
    }

    Schema schema_;
    std::map<std::string, std::string> values_;
};

} // namespace fracevol
