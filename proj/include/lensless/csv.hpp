#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lensless/errors.hpp"

namespace lensless {

// Doubles are serialized with %.17g (round-trip exact); infinities as "inf".
inline std::string csv_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : os_(path) {
        if (!os_) throw FormatError("cannot open CSV for write: " + path);
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row_strings(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ",";
            os_ << cells[i];
        }
        os_ << "\n";
    }

    std::ofstream& stream() { return os_; }

private:
    std::ofstream os_;
};

} // namespace lensless
