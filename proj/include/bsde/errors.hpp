#pragma once

#include <stdexcept>
#include <string>

namespace bsde {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexOutOfRange : Error { using Error::Error; };
struct JumpAtOrBelowMinusOne : Error { using Error::Error; };
struct JumpAtOrAboveOne : Error { using Error::Error; };
struct SpaceMismatch : Error { using Error::Error; };
struct DegenerateCell : Error { using Error::Error; };
struct UndefinedDensity : Error { using Error::Error; };
struct NotAMartingale : Error { using Error::Error; };
struct NotStandard : Error { using Error::Error; };
struct MarginViolated : Error { using Error::Error; };

struct NoConvergence : Error {
  NoConvergence(const std::string& stage_, int step_, int cell_)
      : Error("no convergence in " + stage_ + " stage at step " + std::to_string(step_) +
              ", cell " + std::to_string(cell_)),
        stage(stage_), step(step_), cell(cell_) {}
  std::string stage;
  int step;
  int cell;
};

struct SchemaError : Error {
  SchemaError(std::string path_, const std::string& message)
      : Error(path_ + ": " + message), path(std::move(path_)) {}
  std::string path;
};

struct UnresolvedReference : Error { using Error::Error; };

}  // namespace bsde
