#pragma once
// Dense matrix utilities shared by every other module: symmetric wrappers,
// block selectors and assembly, symmetric eigensolves, PSD tests, and the
// matrix exponential / zero-order-hold discretization.

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "tct/errors.hpp"

namespace tct {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// True when every entry is finite (no NaN / Inf).
bool all_finite(const Mat& m);

// Symmetric matrix wrapper. Construction rejects input whose asymmetry
// exceeds 1e-12 * (1 + max |entry|) and stores the canonical symmetrization
// (M + M^T) / 2 so downstream algebra never sees asymmetric drift.
class SymMat {
 public:
  explicit SymMat(const Mat& m);
  const Mat& mat() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

 private:
  Mat m_;
};

// Block-row selector: selector(i, n, k) is the n x (k*n) matrix picking the
// i-th length-n block (1-based) out of a stacked k*n vector. Index 0 yields
// the zero selector of the same shape.
Mat selector(int block_index, int block_size, int num_blocks);

struct Selector {
  int block_index = 0;
  int block_size = 0;
  int num_blocks = 0;
  Mat mat() const { return selector(block_index, block_size, num_blocks); }
};

// Assemble a block matrix from a rectangular grid of optional blocks.
// Missing blocks are zero. Row/column dimensions are given per block row /
// block column; every present block must match its slot exactly.
Mat block_assemble(const std::vector<std::vector<std::optional<Mat>>>& layout,
                   const std::vector<int>& row_dims,
                   const std::vector<int>& col_dims);

// Symmetric block [[A, B], [B^T, C]] assembly helper for two-block cases.
Mat sym_2x2(const Mat& a, const Mat& b, const Mat& c);

struct SymEig {
  Vec values;   // ascending
  Mat vectors;  // orthonormal columns, M = V * diag(values) * V^T
};

// Eigendecomposition of a symmetric matrix. Throws ConvergenceFailure if the
// reconstruction error exceeds 1e-9 * (1 + spectral norm).
SymEig sym_eig(const SymMat& m);

double lambda_min(const SymMat& m);
double lambda_max(const SymMat& m);

// PSD test: smallest eigenvalue >= -tol * (1 + |largest eigenvalue|).
bool is_psd(const SymMat& m, double tol = 1e-9);

// Largest singular value.
double spectral_norm(const Mat& m);

// Matrix exponential (scaling-and-squaring Padé via Eigen).
Mat expm(const Mat& m);

// Zero-order-hold discretization of dx/dt = Ac x + Bc u at period T > 0:
// returns (A, B) with A = exp(Ac T) and B = \int_0^T exp(Ac s) ds * Bc,
// computed through one augmented matrix exponential.
std::pair<Mat, Mat> zoh_discretize(const Mat& ac, const Mat& bc, double T);

}  // namespace tct
