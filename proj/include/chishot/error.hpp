#pragma once

#include <stdexcept>
#include <string>

namespace chishot {

/// Base of every error the pipeline raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data could not be read or violates the corpus contract.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Configuration, template or command-line problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Evaluation-stage failure (empty predictions, duplicate experiments, ...).
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace chishot
