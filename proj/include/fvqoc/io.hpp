#pragma once

// CSV and file helpers. Numeric cells are written with 17 significant
// digits so doubles round-trip exactly; files land via temp-file + rename.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fvqoc/errors.hpp"

namespace fvqoc {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
        for (size_t i = 0; i < columns_.size(); ++i) {
            if (i) body_ << ',';
            body_ << columns_[i];
        }
        body_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_.size())
            throw ConfigError("CsvWriter: row width does not match header");
        for (size_t i = 0; i < values.size(); ++i) {
            if (i) body_ << ',';
            body_ << format_double(values[i]);
        }
        body_ << '\n';
    }

    void raw_row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_.size())
            throw ConfigError("CsvWriter: row width does not match header");
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) body_ << ',';
            body_ << cells[i];
        }
        body_ << '\n';
    }

    std::string str() const { return body_.str(); }

  private:
    std::vector<std::string> columns_;
    std::ostringstream body_;
};

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw ConfigError("cannot create directory " + path + ": " + ec.message());
}

// Atomic write: contents appear under `path` completely or not at all.
inline void write_text_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open " + tmp + " for writing");
        out << contents;
        out.flush();
        if (!out) throw ConfigError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ConfigError("failed to move " + tmp + " into place: " + ec.message());
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fvqoc
