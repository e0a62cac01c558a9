#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace vulnpipe {

/// Half-open byte range [begin, end) into the source text.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const Span&, const Span&) = default;
};

/// Base of every structured error raised by the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LexError : public Error {
public:
    LexError(Span span, std::string message)
        : Error("lex error at " + std::to_string(span.begin) + ": " + message),
          span_(span), message_(std::move(message)) {}

    [[nodiscard]] Span span() const noexcept { return span_; }
    [[nodiscard]] const std::string& message() const noexcept { return message_; }

private:
    Span span_;
    std::string message_;
};

class ParseError : public Error {
public:
    ParseError(Span span, std::string expected, std::string found)
        : Error("parse error at " + std::to_string(span.begin) + ": expected " + expected +
                ", found " + found),
          span_(span), expected_(std::move(expected)), found_(std::move(found)) {}

    [[nodiscard]] Span span() const noexcept { return span_; }
    [[nodiscard]] const std::string& expected() const noexcept { return expected_; }
    [[nodiscard]] const std::string& found() const noexcept { return found_; }

private:
    Span span_;
    std::string expected_;
    std::string found_;
};

class AnalysisError : public Error {
public:
    using Error::Error;
};

class ConsistencyError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class CorpusError : public Error {
public:
    CorpusError(std::size_t line, std::string reason)
        : Error("corpus line " + std::to_string(line) + ": " + reason),
          line_(line), reason_(std::move(reason)) {}

    /// 1-based line number; 0 when the error is not tied to a line.
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class SplitMismatch : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace vulnpipe
