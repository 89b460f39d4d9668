#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spanforge {

/// Base for every error caused by bad input (queries, graphs, corpora, flags).
/// The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Broken internal contract. The CLI maps these to exit code 2.
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line, std::size_t column)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class ResolutionError : public Error {
public:
    using Error::Error;
};

class GraphError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class PatternError : public Error {
public:
    using Error::Error;
};

/// The pattern compiles but its automaton needs more states than allowed.
class PatternTooComplex : public PatternError {
public:
    using PatternError::PatternError;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class CorpusError : public Error {
public:
    using Error::Error;
};

/// Failure inside an accelerator pipeline stage, tagged with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& reason)
        : Error(stage + ": " + reason), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace spanforge
