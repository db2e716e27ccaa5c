#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace crtmle {

// Malformed or unusable input data (bad CSV, invalid codes, empty subgroup).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure failed: non-convergence, separation, rank deficiency,
// or a root that cannot be bracketed.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, Eigen::VectorXd last_iterate = {},
                          int iterations = 0)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)),
        iterations_(iterations) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::VectorXd last_iterate_;
  int iterations_;
};

}  // namespace crtmle
