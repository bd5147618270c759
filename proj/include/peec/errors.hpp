#pragma once

#include <stdexcept>
#include <string>

namespace peec {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Matrix/vector shape mismatch; the message reports both shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Malformed input text (ARFF/CSV); messages carry a 1-based line number.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Invalid argument or violated precondition.
class ValueError : public Error {
public:
  using Error::Error;
};

/// A non-finite value was produced or detected.
class NumericError : public Error {
public:
  using Error::Error;
};

/// File system failures (open/read/write).
class IoError : public Error {
public:
  using Error::Error;
};

/// Serialized blob does not start with the expected magic bytes.
class BadMagicError : public Error {
public:
  using Error::Error;
};

/// Serialized blob carries an unsupported format version.
class VersionError : public Error {
public:
  using Error::Error;
};

/// Serialized blob ends before the declared content; names the byte counts.
class TruncationError : public Error {
public:
  using Error::Error;
};

/// Wire frame carries a message type outside the protocol.
class UnknownTypeError : public Error {
public:
  using Error::Error;
};

/// Socket-level failures (connect/read/write).
class NetworkError : public Error {
public:
  using Error::Error;
};

} // namespace peec
