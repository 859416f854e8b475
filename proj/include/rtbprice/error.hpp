#pragma once

#include <stdexcept>
#include <string>

namespace rtbprice {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input could not be parsed (URL, registry line, XML, JSON, log record).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A value violates a type invariant (negative price, bad tree, bad profile).
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Model schema hash does not match the client's feature schema.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Report batch does not validate against the record schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Assembled event would carry an identifying string.
class LeakError : public Error {
 public:
  using Error::Error;
};

}  // namespace rtbprice
