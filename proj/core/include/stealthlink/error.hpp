#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stealthlink {

// Process exit codes shared by the CLI and anything that maps errors to them.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  data = 3,
  divergence = 4,
};

// Base for every error the library raises on purpose. The exit code lets the
// CLI map failures without a catch clause per type.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

// Malformed input text. `line` is 1-based within the offending file.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& detail);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(what, ExitCode::data) {}
};

class ReferentialIntegrityError : public Error {
 public:
  explicit ReferentialIntegrityError(const std::string& what) : Error(what, ExitCode::data) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error(what, ExitCode::data) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error(what, ExitCode::data) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(what, ExitCode::usage) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, ExitCode::data) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(what, ExitCode::data) {}
};

class NumericalRankError : public Error {
 public:
  NumericalRankError(std::size_t achieved, std::size_t requested);
  std::size_t achieved_rank() const noexcept { return achieved_; }

 private:
  std::size_t achieved_;
};

class ClassCoverageError : public Error {
 public:
  explicit ClassCoverageError(const std::string& what) : Error(what, ExitCode::data) {}
};

class BandwidthError : public Error {
 public:
  explicit BandwidthError(const std::string& what) : Error(what, ExitCode::data) {}
};

class DivisionError : public Error {
 public:
  explicit DivisionError(const std::string& what) : Error(what, ExitCode::data) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::data) {}
};

// Raised when training produces a non-finite loss. `last_finite_epoch` is the
// last fully completed epoch (0 when the first epoch already diverged).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, std::size_t last_finite_epoch);
  std::size_t last_finite_epoch() const noexcept { return last_finite_epoch_; }

 private:
  std::size_t last_finite_epoch_;
};

// A frozen tensor changed while it was supposed to be read-only.
class FreezeViolation : public Error {
 public:
  explicit FreezeViolation(const std::string& what) : Error(what, ExitCode::data) {}
};

}  // namespace stealthlink
