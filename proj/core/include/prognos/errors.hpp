#pragma once

#include <stdexcept>
#include <string>

namespace prognos {

/// Malformed caller input: bad dimensions, non-finite values, invalid
/// configuration values, unparsable files.
class InvalidInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration refers to unknown states/actions or violates a schema.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The model assigns probability zero to an observation (or to an entire
/// sequence). Carries the offending step and, when known, the sequence.
class ZeroLikelihoodError : public std::runtime_error {
 public:
  ZeroLikelihoodError(const std::string& what, int step, std::string sequence_id = {})
      : std::runtime_error(what), step_(step), sequence_id_(std::move(sequence_id)) {}

  int step() const { return step_; }
  const std::string& sequence_id() const { return sequence_id_; }

 private:
  int step_;
  std::string sequence_id_;
};

/// A mixture component received (numerically) zero responsibility mass in
/// some dimension, so its maximum-likelihood update is undefined.
class StarvedComponentError : public std::runtime_error {
 public:
  explicit StarvedComponentError(const std::string& what, int dim = -1)
      : std::runtime_error(what), dim_(dim) {}

  int dim() const { return dim_; }

 private:
  int dim_;
};

}  // namespace prognos
