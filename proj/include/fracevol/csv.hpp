#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "fracevol/error.hpp"

namespace fracevol {

/// Round-trippable decimal form (17 significant digits).
inline std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Minimal CSV row writer: comma separated, LF terminated, no quoting (fields never contain commas).
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& header(std::initializer_list<std::string_view> names) {
        bool first = true;
        for (auto n : names) {
            if (!first) out_ << ',';
            out_ << n;
            first = false;
        }
        out_ << '\n';
        return *this;
    }

    template <class... Fields>
    CsvWriter& row(const Fields&... fields) {
        bool first = true;
        ((write_field(fields, first)), ...);
        out_ << '\n';
        return *this;
    }

private:
    void write_field(double x, bool& first) { sep(first), out_ << format_real(x); }
    void write_field(const std::string& s, bool& first) { sep(first), out_ << s; }
    void write_field(const char* s, bool& first) { sep(first), out_ << s; }
    void write_field(bool b, bool& first) { sep(first), out_ << (b ? "1" : "0"); }
    template <class Int>
        requires std::is_integral_v<Int>
    void write_field(Int v, bool& first) {
        sep(first), out_ << v;
    }
    void sep(bool& first) {
        if (!first) out_ << ',';
        first = false;
    }

    std::ostream& out_;
};

/// Opens a file for binary (LF-preserving) output; I/O failure is reported with the path.
inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    return f;
}

} // namespace fracevol
