#pragma once

#include <stdexcept>
#include <string>

namespace nct {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define NCT_DEFINE_ERROR(NAME)                              \
  class NAME : public Error {                               \
   public:                                                  \
    explicit NAME(const std::string& msg) : Error(msg) {}   \
  }

// Network construction.
NCT_DEFINE_ERROR(CrossClusterEdge);
NCT_DEFINE_ERROR(SelfLoop);
NCT_DEFINE_ERROR(UnknownNode);
NCT_DEFINE_ERROR(AttributeLengthMismatch);

// Design / probabilities.
NCT_DEFINE_ERROR(InvalidProbability);
NCT_DEFINE_ERROR(InvalidThreshold);
NCT_DEFINE_ERROR(PositivityViolation);

// Estimation.
NCT_DEFINE_ERROR(EmptyCell);
NCT_DEFINE_ERROR(InvalidLevel);
NCT_DEFINE_ERROR(MissingCovariate);

// Simulation.
NCT_DEFINE_ERROR(InvalidRho);

// Trees.
NCT_DEFINE_ERROR(TooFewClusters);
NCT_DEFINE_ERROR(MinSizeViolated);
NCT_DEFINE_ERROR(ZeroRootEffect);

// Input / configuration.
NCT_DEFINE_ERROR(SchemaError);
NCT_DEFINE_ERROR(ConfigError);

#undef NCT_DEFINE_ERROR

}  // namespace nct
