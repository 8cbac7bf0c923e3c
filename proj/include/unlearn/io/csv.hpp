#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "unlearn/error.hpp"

namespace unlearn {

/// Minimal RFC-4180 writer: comma-separated fields, CRLF record separators,
/// quoting only when a field contains a comma, quote, or newline. Numeric
/// fields use %.17g so doubles round-trip exactly.
class CsvWriter {
public:
    void field(const std::string& s) {
        if (!row_.empty()) row_ += ',';
        if (s.find_first_of(",\"\r\n") != std::string::npos) {
            row_ += '"';
            for (char c : s) {
                row_ += c;
                if (c == '"') row_ += '"';
            }
            row_ += '"';
        } else {
            row_ += s;
        }
    }

    void field(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        field(std::string(buf));
    }

    void field(long long v) { field(std::to_string(v)); }
    void field(int v) { field(std::to_string(v)); }
    void field(std::size_t v) { field(std::to_string(v)); }

    void end_row() {
        out_ += row_;
        out_ += "\r\n";
        row_.clear();
    }

    const std::string& str() const { return out_; }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw FormatError("csv: cannot open " + path + " for writing");
        f.write(out_.data(), static_cast<std::streamsize>(out_.size()));
        if (!f) throw FormatError("csv: write failed for " + path);
    }

private:
    std::string row_;
    std::string out_;
};

}  // namespace unlearn
