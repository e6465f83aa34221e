#include "tct/matrixcore.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>

namespace tct {

bool all_finite(const Mat& m) { return m.allFinite(); }

SymMat::SymMat(const Mat& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("symmetric wrapper needs a square matrix, got " +
                            std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
  }
  if (!m.allFinite()) {
    throw NumericalBreakdown("symmetric wrapper given non-finite entries");
  }
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw DimensionMismatch("matrix is not symmetric: asymmetry " +
                            std::to_string(asym) + " exceeds tolerance " +
                            std::to_string(1e-12 * scale));
  }
  m_ = 0.5 * (m + m.transpose());
}

Mat selector(int block_index, int block_size, int num_blocks) {
  if (block_size <= 0 || num_blocks <= 0 || block_index < 0 ||
      block_index > num_blocks) {
    throw DimensionMismatch(
        "selector(" + std::to_string(block_index) + ", " +
        std::to_string(block_size) + ", " + std::to_string(num_blocks) +
        ") out of range");
  }
  Mat s = Mat::Zero(block_size, static_cast<long>(block_size) * num_blocks);
  if (block_index >= 1) {
    s.block(0, (block_index - 1) * block_size, block_size, block_size)
        .setIdentity();
  }
  return s;
}

Mat block_assemble(const std::vector<std::vector<std::optional<Mat>>>& layout,
                   const std::vector<int>& row_dims,
                   const std::vector<int>& col_dims) {
  const std::size_t br = row_dims.size();
  const std::size_t bc = col_dims.size();
  if (layout.size() != br) {
    throw DimensionMismatch("block layout has " +
                            std::to_string(layout.size()) +
                            " block rows, expected " + std::to_string(br));
  }
  long total_rows = 0;
  long total_cols = 0;
  for (int d : row_dims) {
    if (d <= 0) throw DimensionMismatch("non-positive block row dimension");
    total_rows += d;
  }
  for (int d : col_dims) {
    if (d <= 0) throw DimensionMismatch("non-positive block column dimension");
    total_cols += d;
  }
  Mat out = Mat::Zero(total_rows, total_cols);
  long r0 = 0;
  for (std::size_t i = 0; i < br; ++i) {
    if (layout[i].size() != bc) {
      throw DimensionMismatch("block row " + std::to_string(i) + " has " +
                              std::to_string(layout[i].size()) +
                              " blocks, expected " + std::to_string(bc));
    }
    long c0 = 0;
    for (std::size_t j = 0; j < bc; ++j) {
      if (layout[i][j].has_value()) {
        const Mat& blk = *layout[i][j];
        if (blk.rows() != row_dims[i] || blk.cols() != col_dims[j]) {
          throw DimensionMismatch(
              "block (" + std::to_string(i) + "," + std::to_string(j) +
              ") is " + std::to_string(blk.rows()) + "x" +
              std::to_string(blk.cols()) + ", slot wants " +
              std::to_string(row_dims[i]) + "x" + std::to_string(col_dims[j]));
        }
        out.block(r0, c0, row_dims[i], col_dims[j]) = blk;
      }
      c0 += col_dims[j];
    }
    r0 += row_dims[i];
  }
  return out;
}

Mat sym_2x2(const Mat& a, const Mat& b, const Mat& c) {
  return block_assemble(
      {{a, b}, {Mat(b.transpose()), c}},
      {static_cast<int>(a.rows()), static_cast<int>(c.rows())},
      {static_cast<int>(a.cols()), static_cast<int>(c.cols())});
}

SymEig sym_eig(const SymMat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat());
  if (es.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolve did not converge");
  }
  SymEig out{es.eigenvalues(), es.eigenvectors()};
  const Mat recon =
      out.vectors * out.values.asDiagonal() * out.vectors.transpose();
  const double nrm = out.values.cwiseAbs().maxCoeff();
  const double err = (recon - m.mat()).cwiseAbs().maxCoeff();
  if (err > 1e-9 * (1.0 + nrm)) {
    throw ConvergenceFailure("symmetric eigensolve reconstruction error " +
                             std::to_string(err) + " at scale " +
                             std::to_string(nrm));
  }
  return out;
}

double lambda_min(const SymMat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat(),
                                        Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolve did not converge");
  }
  return es.eigenvalues().minCoeff();
}

double lambda_max(const SymMat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat(),
                                        Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolve did not converge");
  }
  return es.eigenvalues().maxCoeff();
}

bool is_psd(const SymMat& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat(),
                                        Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolve did not converge");
  }
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  return lmin >= -tol * (1.0 + std::abs(lmax));
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

Mat expm(const Mat& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("matrix exponential needs a square matrix");
  }
  Mat out = m.exp();
  if (!out.allFinite()) {
    throw NumericalBreakdown("matrix exponential overflowed");
  }
  return out;
}

std::pair<Mat, Mat> zoh_discretize(const Mat& ac, const Mat& bc, double T) {
  const long n = ac.rows();
  const long m = bc.cols();
  if (ac.rows() != ac.cols() || bc.rows() != n) {
    throw DimensionMismatch("zoh: A must be n x n and B n x m");
  }
  if (!(T > 0.0)) {
    throw BadProblem("zoh: sampling period must be positive");
  }
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = ac * T;
  aug.topRightCorner(n, m) = bc * T;
  const Mat e = expm(aug);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

}  // namespace tct
