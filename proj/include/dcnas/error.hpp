#pragma once

#include <stdexcept>
#include <string>

namespace dcnas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Architecture mask with every bit cleared; no subnet can be built from it.
class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

// dataio failures, one type per distinct cause.
class IoError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public IoError {
 public:
  using IoError::IoError;
};
class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};
class CountMismatchError : public IoError {
 public:
  using IoError::IoError;
};
class SchemaError : public IoError {
 public:
  using IoError::IoError;
};
class EmptyDatasetError : public IoError {
 public:
  using IoError::IoError;
};
class CsvParseError : public IoError {
 public:
  CsvParseError(std::size_t row, std::size_t column, const std::string& cell)
      : IoError("row " + std::to_string(row) + ", column " + std::to_string(column) +
                ": not a number: '" + cell + "'"),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace dcnas
