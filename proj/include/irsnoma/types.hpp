#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace irsnoma {

template <typename Scalar>
using Complex = std::complex<Scalar>;

template <typename Scalar>
using CVector = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using CRowVector = Eigen::Matrix<Complex<Scalar>, 1, Eigen::Dynamic>;

template <typename Scalar>
using CMatrix = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateCsiError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition_number)
      : Error(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

class EnvelopeTooLooseError : public Error {
 public:
  using Error::Error;
};

class SearchTooLargeError : public ValidationError {
 public:
  SearchTooLargeError(const std::string& what, double count)
      : ValidationError(what), count_(count) {}
  double count() const { return count_; }

 private:
  double count_;
};

/// No constraint-feasible result exists (CLI exit code 2).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace irsnoma
