#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ehrrag {

// Error categories map onto CLI exit codes: config/validation -> 2,
// data -> 3, provider/transport -> 4 (see cli.hpp).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model output that violates a template's answer contract. Handled at the
// call site (retry once, then fall back); never escapes to the CLI.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Accumulates non-fatal flags raised along fail-soft paths.
struct Diagnostics {
    std::vector<std::string> notes;

    void flag(std::string note) { notes.push_back(std::move(note)); }

    bool has(std::string_view prefix) const {
        for (const auto& n : notes) {
            if (n.rfind(prefix, 0) == 0) return true;
        }
        return false;
    }

    bool empty() const { return notes.empty(); }

    void merge_from(const Diagnostics& other) {
        notes.insert(notes.end(), other.notes.begin(), other.notes.end());
    }
};

}  // namespace ehrrag
