#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ehrrag/errors.hpp"

namespace ehrrag {

// Minimal RFC-4180 reader: quoted fields, embedded commas/newlines,
// doubled quotes, CRLF tolerance. Streams rows so large event files do
// not need to fit in memory twice.
class CsvReader {
public:
    explicit CsvReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw DataError("cannot open file: " + path.string());
    }

    /// Reads the next row. Returns false at end of input.
    bool next(std::vector<std::string>& row) {
        row.clear();
        int c = in_.get();
        if (c == EOF) return false;

        std::string field;
        bool quoted = false;
        while (true) {
            if (c == EOF) {
                row.push_back(std::move(field));
                return true;
            }
            if (quoted) {
                if (c == '"') {
                    int peek = in_.get();
                    if (peek == '"') {
                        field.push_back('"');
                    } else {
                        quoted = false;
                        in_.unget();
                        if (peek == EOF) in_.clear();
                    }
                } else {
                    field.push_back(static_cast<char>(c));
                }
            } else if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == ',') {
                row.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                row.push_back(std::move(field));
                return true;
            } else {
                field.push_back(static_cast<char>(c));
            }
            c = in_.get();
        }
    }

private:
    std::ifstream in_;
};

inline std::string csv_escape(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line.push_back(',');
        line += csv_escape(fields[i]);
    }
    line.push_back('\n');
    return line;
}

}  // namespace ehrrag
