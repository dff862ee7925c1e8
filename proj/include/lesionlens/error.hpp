#pragma once
// Error kinds shared by every lesionlens module.

#include <stdexcept>
#include <string>
#include <string_view>

namespace lesionlens {

enum class ErrorKind {
    Io,
    Format,
    Data,
    DegenerateInput,
    EmptyMask,
    ShapeMismatch,
    DimensionMismatch,
    InvalidSimplex,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "IoError";
        case ErrorKind::Format: return "FormatError";
        case ErrorKind::Data: return "DataError";
        case ErrorKind::DegenerateInput: return "DegenerateInput";
        case ErrorKind::EmptyMask: return "EmptyMask";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::InvalidSimplex: return "InvalidSimplex";
    }
    return "Error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Degenerate-analysis failures are distinguished from bad input by the CLI.
    bool is_degenerate() const noexcept {
        return kind_ == ErrorKind::DegenerateInput || kind_ == ErrorKind::EmptyMask;
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace lesionlens
