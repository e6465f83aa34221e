#pragma once
// Error taxonomy shared across the toolkit. Each type names the condition it
// reports; catch sites dispatch on type, messages carry the particulars.

#include <stdexcept>

namespace tct {

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalBreakdown : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingVariable : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientTail : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnboundedSet : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularG : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoFeasibleH : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularTheta : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InertiaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tct
