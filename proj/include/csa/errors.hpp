#pragma once

#include <stdexcept>
#include <string>

namespace csa {

// Base for every error the library raises on contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Tape misuse, e.g. backward before any forward op was recorded.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// R and F disagree on the temporal length.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Reports that cannot be lined up (e.g. different tIoU thresholds).
class ComparisonError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace csa
