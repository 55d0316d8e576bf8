#ifndef NMF_ENERGY_ERROR_HPP
#define NMF_ENERGY_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nmf_energy {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DegreeOverflow : public Error {
 public:
  using Error::Error;
};

class DomainNotCovered : public Error {
 public:
  using Error::Error;
};

class BudgetViolation : public Error {
 public:
  using Error::Error;
};

class SearchSpaceTooLarge : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace nmf_energy

#endif  // NMF_ENERGY_ERROR_HPP
