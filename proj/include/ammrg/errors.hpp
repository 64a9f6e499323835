#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ammrg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-conforming vector or matrix shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity showed up where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Retrieval or selection over a memory with no rows.
class EmptyMemoryError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed binary input. `offset` is the byte position where decoding failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Header declares more payload than the file holds.
class TruncationError : public ParseError {
public:
    using ParseError::ParseError;
};

} // namespace ammrg
