#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace holmes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad caller-supplied argument (empty dataset, invalid fraction, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes that do not chain.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Value outside the domain an operation accepts, e.g. pixels outside [-0.5, 0.5].
class DomainError : public Error {
public:
    using Error::Error;
};

/// An activation trace or gradient that does not belong to the network it is used with.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Requested mode is not supported by the algorithm (e.g. untargeted JSMA).
class UnsupportedModeError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text input. `offset` is the byte position where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedVersionError : public Error {
public:
    UnsupportedVersionError(std::uint32_t found, std::uint32_t supported)
        : Error("unsupported format version " + std::to_string(found) + " (this build reads version " +
                std::to_string(supported) + ")"),
          found_(found) {}

    std::uint32_t found() const noexcept { return found_; }

private:
    std::uint32_t found_;
};

/// Failure inside one pipeline stage; carries the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace holmes
