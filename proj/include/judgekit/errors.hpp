#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace judgekit {

// Root of every error raised by the library. Callers that only want to know
// "did judgekit reject this" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

class InsufficientPoolError : public Error {
 public:
  using Error::Error;
};

// Raised when an adapter is used for a topic other than the one it was
// trained on. There is intentionally no way to disable this check.
class UsageRestrictionError : public Error {
 public:
  using Error::Error;
};

class AdapterFormatError : public Error {
 public:
  using Error::Error;
};

class AttachError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class ScorerError : public Error {
 public:
  using Error::Error;
};

class CastError : public Error {
 public:
  CastError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class LeakageError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ChatError : public Error {
 public:
  ChatError(const std::string& what, bool transient)
      : Error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace judgekit
