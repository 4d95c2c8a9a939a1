#pragma once

#include <stdexcept>
#include <string>

namespace binclust {

// Base for every error raised by the library. The CLI maps all of these to
// the data/model exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or ids are inconsistent (mismatched lengths, empty cluster, K < 2).
class StructureError : public Error {
 public:
  using Error::Error;
};

// A modelling assumption required by the requested quantity does not hold.
class AssumptionError : public Error {
 public:
  using Error::Error;
};

// The budget is too small for the requested procedure.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// K-means seeding could not produce K nonempty seed sets.
class SeedingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace binclust
