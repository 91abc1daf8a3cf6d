#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace memrl {

// Contract violations (bad arguments, duplicate ids, unknown ids, ...)
// map to CLI exit code 2; file/parse problems map to exit code 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
  NotFoundError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_ids(std::move(missing)) {}
  std::vector<std::string> missing_ids;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class NonWatertightError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

class InvalidComparisonError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = -1) : Error(what), line_number(line) {}
  int line_number;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace memrl
