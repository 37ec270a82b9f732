#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchguide {

/// Base for every error raised by the library. Callers that only care about
/// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input file content. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Old and new text are identical, so there is nothing to annotate or extract.
class NoChangeError : public Error {
public:
    using Error::Error;
};

/// Model output that does not follow the `action:key_element` line format.
class MalformedOutputError : public Error {
public:
    using Error::Error;
};

/// A generated completion whose fix markers cannot be spliced into the pair.
class MalformedCompletionError : public Error {
public:
    using Error::Error;
};

/// The matcher has nothing to offer for a request.
class EmptyGuidanceError : public Error {
public:
    using Error::Error;
};

class LexError : public Error {
public:
    LexError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace patchguide
