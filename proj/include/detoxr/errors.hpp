#ifndef DETOXR_ERRORS_HPP
#define DETOXR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace detoxr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input failed validation; field() is a dotted path into the record
// (e.g. "structured.vitals.spo2").
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LabelError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GroupSizeError : public Error {
 public:
  using Error::Error;
};

class EmptyGroupError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class MismatchError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class MissingLabelsError : public Error {
 public:
  explicit MissingLabelsError(std::string case_id)
      : Error("case '" + case_id + "' has no labels"), case_id_(std::move(case_id)) {}

  const std::string& case_id() const noexcept { return case_id_; }

 private:
  std::string case_id_;
};

// Inference endpoint failures.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class AuthError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ContractError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

}  // namespace detoxr

#endif  // DETOXR_ERRORS_HPP
