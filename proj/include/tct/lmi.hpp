#pragma once
// Affine matrix-inequality feasibility: model problems over scalar / full /
// symmetric / symmetric-PSD decision variables with affine symmetric-matrix
// constraints, and decide strict feasibility with a self-contained dense
// primal-dual interior-point solver (phase-I formulation).
//
// A StrictlyFeasible verdict is never solver trust: the returned witness is
// re-evaluated through the original constraint callables and must clear the
// strictness margin. An Infeasible verdict carries a positive-semidefinite
// multiplier certificate whose trace pairing proves emptiness at the margin.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tct/matrixcore.hpp"

namespace tct::lmi {

enum class VarShape { Scalar, Full, Symmetric, SymmetricPsd };

struct VarSpec {
  std::string name;
  VarShape shape = VarShape::Scalar;
  int rows = 1;  // Full: rows x cols. Symmetric / SymmetricPsd: rows x rows.
  int cols = 1;  // Scalar: 1 x 1.
  std::optional<double> lower_bound;  // scalars only: value >= lower_bound

  static VarSpec scalar(std::string n,
                        std::optional<double> lower = std::nullopt) {
    return {std::move(n), VarShape::Scalar, 1, 1, lower};
  }
  static VarSpec full(std::string n, int r, int c) {
    return {std::move(n), VarShape::Full, r, c, std::nullopt};
  }
  static VarSpec symmetric(std::string n, int d) {
    return {std::move(n), VarShape::Symmetric, d, d, std::nullopt};
  }
  static VarSpec symmetric_psd(std::string n, int d) {
    return {std::move(n), VarShape::SymmetricPsd, d, d, std::nullopt};
  }
};

// Linear map from a variable's matrix value to a symmetric increment of one
// constraint block. Must satisfy map(0) = 0 and additivity; the solver
// verifies this numerically before trusting it.
using LinearMap = std::function<Mat(const Mat&)>;

enum class Sense { PsdStrict, NsdStrict };  // M(z) ⪰ margin   /   M(z) ⪯ -margin

struct AffineConstraint {
  std::string name;
  int dim = 0;  // block is dim x dim
  Sense sense = Sense::PsdStrict;
  Mat constant;  // dim x dim symmetric; zero if empty
  std::map<std::string, LinearMap> terms;
};

using Assignment = std::map<std::string, Mat>;  // scalars as 1x1 matrices

struct Problem {
  std::vector<VarSpec> variables;
  std::vector<AffineConstraint> constraints;
};

enum class FeasStatus { StrictlyFeasible, Infeasible, Unknown };

struct ConstraintEval {
  std::string name;
  double lambda_min = 0.0;  // after sense normalization (NSD blocks negated)
  bool satisfied = false;   // lambda_min >= margin / 2
};

struct Feasibility {
  FeasStatus status = FeasStatus::Unknown;
  Assignment witness;  // filled on StrictlyFeasible
  // Minimum over constraints of lambda_min at the witness, after sense
  // normalization. Only meaningful on StrictlyFeasible.
  double margin = 0.0;
  std::vector<ConstraintEval> recheck;  // independent witness re-evaluation
  int iterations = 0;
  double phase1_objective = 0.0;  // final slack level t in normalized units
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double duality_gap = 0.0;
  // Infeasibility certificate quality: trace pairing with the constant terms
  // (negative proves emptiness) and the worst annihilation residual.
  double certificate_pairing = 0.0;
  double certificate_residual = 0.0;
  std::string detail;
};

struct SolveOptions {
  // Strictness margin δ. Non-positive selects the per-block default
  // 1e-7 * (1 + spectral norm of the constant term).
  double margin = 0.0;
  int budget = 150;            // interior-point iteration cap
  std::uint64_t seed = 0;      // used only for linearity verification probes
  bool collect_certificate = true;
};

// Decide strict feasibility. Throws BadProblem (no constraints, unknown
// variable, nonlinear map, bad dimensions) and NumericalBreakdown only for
// non-recoverable internal failures; ordinary numerical trouble degrades to
// FeasStatus::Unknown with diagnostics.
Feasibility solve_feasibility(const Problem& problem,
                              const SolveOptions& opts = {});

// Evaluate every constraint at an assignment, independently of the solver.
// margin <= 0 selects the same per-block default as solve_feasibility.
std::vector<ConstraintEval> eval_constraints(const Problem& problem,
                                             const Assignment& assignment,
                                             double margin = 0.0);

// Evaluate one constraint block (constant + sum of term maps) at an
// assignment, without sense normalization. Used by diagnostics and tests.
Mat eval_block(const Problem& problem, const AffineConstraint& c,
               const Assignment& assignment);

// Dense JSON dump of the problem (variables, probed coefficient matrices,
// constants) for debugging and cross-solver comparison.
std::string problem_to_json(const Problem& problem);

}  // namespace tct::lmi
