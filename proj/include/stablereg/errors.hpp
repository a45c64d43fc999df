#pragma once

#include <stdexcept>
#include <string>

namespace stablereg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model (distribution, regression function, budget) violates its invariants.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Dyadic index arithmetic would leave the 64-bit integer range.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition failed (bad sample count, bad noise for a model, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete configuration / input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// No admissible threshold or block length exists within the configured horizon.
class HorizonExhausted : public Error {
 public:
  using Error::Error;
};

/// The attacked procedure never came close to the block's target within budget.
/// This is a legitimate outcome: the spliced prefix is a witness of non-convergence.
class ConsistencyViolationWitness : public Error {
 public:
  ConsistencyViolationWitness(const std::string& what, int block, double best_distance)
      : Error(what), block_(block), best_distance_(best_distance) {}

  int block() const noexcept { return block_; }
  double best_distance() const noexcept { return best_distance_; }

 private:
  int block_;
  double best_distance_;
};

}  // namespace stablereg
