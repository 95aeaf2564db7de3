#pragma once

#include <stdexcept>
#include <string>

namespace smerf {

// Input text could not be parsed. Carries 1-based line/column of the failure.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line, int column)
        : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ")"),
          line_(line), column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// Input parsed but violates a structural constraint (e.g. dangling node ref).
class StructuralError : public std::runtime_error {
public:
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

// Query location not covered by the loaded map tile.
class OutOfCoverageError : public std::runtime_error {
public:
    explicit OutOfCoverageError(const std::string& what) : std::runtime_error(what) {}
};

// A numeric kernel produced a non-finite intermediate.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be read or written. Message carries the path.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace smerf
