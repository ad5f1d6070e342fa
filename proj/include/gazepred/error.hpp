#pragma once

#include <stdexcept>
#include <string>

namespace gazepred {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid configuration values or mismatched options.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Bad or insufficient input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, long row)
      : DataError(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

class RateError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

/// A pipeline stage ran before the stage that produces its inputs.
class DependencyError : public DataError {
 public:
  DependencyError(const std::string& stage, const std::string& what)
      : DataError("missing output of stage '" + stage + "': " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
};

class InstabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : NumericalError(what + " (epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace gazepred
