#include "tct/lmi.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <cstdio>
#include <cstdlib>

#include "tct/rng.hpp"

namespace tct::lmi {
namespace {

bool trace_enabled() {
  static const bool on = std::getenv("TCT_LMI_TRACE") != nullptr;
  return on;
}

int dof_count(const VarSpec& v) {
  switch (v.shape) {
    case VarShape::Scalar:
      return 1;
    case VarShape::Full:
      return v.rows * v.cols;
    case VarShape::Symmetric:
    case VarShape::SymmetricPsd:
      return v.rows * (v.rows + 1) / 2;
  }
  throw BadProblem("unreachable variable shape");
}

void validate_var(const VarSpec& v) {
  if (v.name.empty()) throw BadProblem("variable with empty name");
  if (v.rows <= 0 || v.cols <= 0) {
    throw BadProblem("variable '" + v.name + "' has non-positive dimensions");
  }
  if (v.shape == VarShape::Scalar && (v.rows != 1 || v.cols != 1)) {
    throw BadProblem("scalar variable '" + v.name + "' must be 1x1");
  }
  if ((v.shape == VarShape::Symmetric || v.shape == VarShape::SymmetricPsd) &&
      v.rows != v.cols) {
    throw BadProblem("symmetric variable '" + v.name + "' must be square");
  }
  if (v.lower_bound.has_value() && v.shape != VarShape::Scalar) {
    throw BadProblem("lower bound on non-scalar variable '" + v.name + "'");
  }
}

Mat basis_element(const VarSpec& v, int idx) {
  switch (v.shape) {
    case VarShape::Scalar:
      return Mat::Constant(1, 1, 1.0);
    case VarShape::Full: {
      Mat e = Mat::Zero(v.rows, v.cols);
      e(idx / v.cols, idx % v.cols) = 1.0;
      return e;
    }
    case VarShape::Symmetric:
    case VarShape::SymmetricPsd: {
      const int d = v.rows;
      int k = idx;
      for (int i = 0; i < d; ++i) {
        const int rowlen = d - i;
        if (k < rowlen) {
          const int j = i + k;
          Mat e = Mat::Zero(d, d);
          e(i, j) = 1.0;
          e(j, i) = 1.0;
          return e;
        }
        k -= rowlen;
      }
      break;
    }
  }
  throw BadProblem("basis index out of range");
}

Mat value_from_coords(const VarSpec& v, const double* z) {
  switch (v.shape) {
    case VarShape::Scalar:
      return Mat::Constant(1, 1, z[0]);
    case VarShape::Full: {
      Mat m(v.rows, v.cols);
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) m(i, j) = z[i * v.cols + j];
      return m;
    }
    case VarShape::Symmetric:
    case VarShape::SymmetricPsd: {
      const int d = v.rows;
      Mat m(d, d);
      int k = 0;
      for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
          m(i, j) = z[k];
          m(j, i) = z[k];
          ++k;
        }
      }
      return m;
    }
  }
  throw BadProblem("unreachable variable shape");
}

Mat random_value(const VarSpec& v, Rng& rng) {
  const int p = dof_count(v);
  std::vector<double> z(static_cast<std::size_t>(p));
  for (double& x : z) x = rng.uniform(-1.0, 1.0);
  return value_from_coords(v, z.data());
}

Mat canon_sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

double default_margin(const Mat& sense_constant) {
  return 1e-7 * (1.0 + spectral_norm(sense_constant));
}

// One solver block in dual standard form Z_c = C_c - sum_j y_j F_cj - t I.
struct SolverBlock {
  std::string name;
  int dim = 0;
  Mat cshift;  // scaled, margin-shifted constant
  std::vector<std::pair<int, Mat>> f;  // global dof index -> F matrix (scaled)
  bool is_cap = false;                 // cap block 1 - t >= 0: no margin shift
};

// Sense-normalized constraint in original units, used for independent
// witness rechecks and certificates.
struct NormalizedCon {
  std::string name;
  int dim = 0;
  Mat c0;                              // original-units constant
  std::vector<std::pair<int, Mat>> a;  // original-units coefficients
  double delta = 0.0;
  bool implicit = false;
  int source_index = -1;  // into problem.constraints (-1 for implicit)
};

struct VarLayout {
  const VarSpec* spec = nullptr;
  int offset = 0;
  int dof = 0;
};

struct Compiled {
  std::vector<VarLayout> vars;              // in problem order
  std::map<std::string, int> var_index;     // name -> index into vars
  int total_dof = 0;
  std::vector<NormalizedCon> cons;          // constraints then implicit blocks
  std::vector<double> dof_scale;            // z_original = dof_scale * y
  std::vector<SolverBlock> blocks;          // scaled solver form + cap
  // Smallest normalized margin across blocks: the scale below which the
  // phase-I objective cannot distinguish infeasible from marginal.
  double margin_floor = 1e-7;
};

void verify_linear(const AffineConstraint& c, const VarSpec& v,
                   const LinearMap& map, Rng& rng) {
  const Mat zero_in = Mat::Zero(v.rows, v.cols);
  const Mat at_zero = map(zero_in);
  if (at_zero.rows() != c.dim || at_zero.cols() != c.dim) {
    throw BadProblem("constraint '" + c.name + "' term '" + v.name +
                     "' returns wrong block size");
  }
  if (at_zero.cwiseAbs().maxCoeff() > 1e-10) {
    throw BadProblem("constraint '" + c.name + "' term '" + v.name +
                     "' is affine, not linear (map(0) != 0)");
  }
  const Mat a = random_value(v, rng);
  const Mat b = random_value(v, rng);
  const Mat ma = map(a);
  const Mat mb = map(b);
  const Mat mab = map(a + b);
  const double scale =
      1.0 + ma.cwiseAbs().maxCoeff() + mb.cwiseAbs().maxCoeff();
  if ((mab - ma - mb).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw BadProblem("constraint '" + c.name + "' term '" + v.name +
                     "' failed the additivity check");
  }
}

Compiled compile(const Problem& problem, const SolveOptions& opts) {
  if (problem.constraints.empty()) {
    throw BadProblem("problem has no constraints");
  }
  Compiled cc;
  for (const VarSpec& v : problem.variables) {
    validate_var(v);
    if (cc.var_index.count(v.name)) {
      throw BadProblem("duplicate variable name '" + v.name + "'");
    }
    VarLayout layout{&v, cc.total_dof, dof_count(v)};
    cc.var_index[v.name] = static_cast<int>(cc.vars.size());
    cc.vars.push_back(layout);
    cc.total_dof += layout.dof;
  }

  Rng rng(opts.seed ^ 0x9E3779B97F4A7C15ULL);

  int ci = 0;
  for (const AffineConstraint& c : problem.constraints) {
    if (c.dim <= 0) {
      throw BadProblem("constraint '" + c.name + "' has non-positive size");
    }
    Mat c0 = c.constant.size() == 0 ? Mat::Zero(c.dim, c.dim) : c.constant;
    if (c0.rows() != c.dim || c0.cols() != c.dim) {
      throw BadProblem("constraint '" + c.name + "' constant size mismatch");
    }
    const double cscale = 1.0 + c0.cwiseAbs().maxCoeff();
    if ((c0 - c0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * cscale) {
      throw BadProblem("constraint '" + c.name + "' constant not symmetric");
    }
    c0 = canon_sym(c0);

    NormalizedCon nc;
    nc.name = c.name.empty() ? ("constraint_" + std::to_string(ci)) : c.name;
    nc.dim = c.dim;
    nc.source_index = ci;
    const double sense = (c.sense == Sense::PsdStrict) ? 1.0 : -1.0;
    nc.c0 = sense * c0;

    for (const auto& [vname, map] : c.terms) {
      auto it = cc.var_index.find(vname);
      if (it == cc.var_index.end()) {
        throw BadProblem("constraint '" + nc.name +
                         "' references unknown variable '" + vname + "'");
      }
      const VarLayout& vl = cc.vars[static_cast<std::size_t>(it->second)];
      verify_linear(c, *vl.spec, map, rng);
      for (int j = 0; j < vl.dof; ++j) {
        Mat a = map(basis_element(*vl.spec, j));
        const double ascale = 1.0 + a.cwiseAbs().maxCoeff();
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * ascale) {
          throw BadProblem("constraint '" + nc.name + "' term '" + vname +
                           "' produces a non-symmetric increment");
        }
        a = sense * canon_sym(a);
        if (a.cwiseAbs().maxCoeff() > 0.0) {
          nc.a.emplace_back(vl.offset + j, std::move(a));
        }
      }
    }
    nc.delta = opts.margin > 0.0 ? opts.margin : default_margin(nc.c0);
    cc.cons.push_back(std::move(nc));
    ++ci;
  }

  // Implicit cone blocks: symmetric-PSD variables and scalar lower bounds.
  for (const VarLayout& vl : cc.vars) {
    const VarSpec& v = *vl.spec;
    if (v.shape == VarShape::SymmetricPsd) {
      NormalizedCon nc;
      nc.name = "psd:" + v.name;
      nc.dim = v.rows;
      nc.c0 = Mat::Zero(v.rows, v.rows);
      nc.implicit = true;
      for (int j = 0; j < vl.dof; ++j) {
        nc.a.emplace_back(vl.offset + j, basis_element(v, j));
      }
      nc.delta = opts.margin > 0.0 ? opts.margin : 1e-7;
      cc.cons.push_back(std::move(nc));
    }
    if (v.lower_bound.has_value()) {
      NormalizedCon nc;
      nc.name = "lb:" + v.name;
      nc.dim = 1;
      nc.c0 = Mat::Constant(1, 1, -*v.lower_bound);
      nc.implicit = true;
      nc.a.emplace_back(vl.offset, Mat::Constant(1, 1, 1.0));
      nc.delta = opts.margin > 0.0
                     ? opts.margin
                     : 1e-7 * (1.0 + std::abs(*v.lower_bound));
      cc.cons.push_back(std::move(nc));
    }
  }

  // Block scaling by constant norm, then per-dof scaling by aggregate
  // coefficient norm. Witnesses are mapped back through dof_scale.
  std::vector<double> block_scale(cc.cons.size(), 1.0);
  std::vector<double> agg(static_cast<std::size_t>(cc.total_dof), 0.0);
  for (std::size_t k = 0; k < cc.cons.size(); ++k) {
    block_scale[k] = 1.0 + spectral_norm(cc.cons[k].c0);
    for (const auto& [j, a] : cc.cons[k].a) {
      const double fn = a.norm() / block_scale[k];
      agg[static_cast<std::size_t>(j)] += fn * fn;
    }
  }
  cc.dof_scale.assign(static_cast<std::size_t>(cc.total_dof), 1.0);
  for (int j = 0; j < cc.total_dof; ++j) {
    const double g = std::sqrt(agg[static_cast<std::size_t>(j)]);
    if (g > 1e-300) cc.dof_scale[static_cast<std::size_t>(j)] = 1.0 / g;
  }

  cc.margin_floor = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cc.cons.size(); ++k) {
    const NormalizedCon& nc = cc.cons[k];
    SolverBlock sb;
    sb.name = nc.name;
    sb.dim = nc.dim;
    const double s = block_scale[k];
    sb.cshift = nc.c0 / s - (nc.delta / s) * Mat::Identity(nc.dim, nc.dim);
    cc.margin_floor = std::min(cc.margin_floor, nc.delta / s);
    for (const auto& [j, a] : nc.a) {
      sb.f.emplace_back(
          j, Mat(-(cc.dof_scale[static_cast<std::size_t>(j)] / s) * a));
    }
    cc.blocks.push_back(std::move(sb));
  }
  // Cap block 1 - t >= 0 bounds the phase-I objective.
  SolverBlock cap;
  cap.name = "cap";
  cap.dim = 1;
  cap.cshift = Mat::Constant(1, 1, 1.0);
  cap.is_cap = true;
  cc.blocks.push_back(std::move(cap));
  return cc;
}

Assignment assignment_from_coords(const Compiled& cc,
                                  const std::vector<double>& y) {
  Assignment out;
  for (const VarLayout& vl : cc.vars) {
    std::vector<double> z(static_cast<std::size_t>(vl.dof));
    for (int j = 0; j < vl.dof; ++j) {
      z[static_cast<std::size_t>(j)] =
          y[static_cast<std::size_t>(vl.offset + j)] *
          cc.dof_scale[static_cast<std::size_t>(vl.offset + j)];
    }
    out[vl.spec->name] = value_from_coords(*vl.spec, z.data());
  }
  return out;
}

// Evaluate a sense-normalized constraint (original units) at coordinates.
Mat eval_normalized(const NormalizedCon& nc, const Compiled& cc,
                    const std::vector<double>& y) {
  Mat m = nc.c0;
  for (const auto& [j, a] : nc.a) {
    m += (y[static_cast<std::size_t>(j)] *
          cc.dof_scale[static_cast<std::size_t>(j)]) *
         a;
  }
  return m;
}

struct StepInfo {
  double alpha = 0.0;
  bool ok = true;
};

// Largest step alpha with S + alpha * dS still PSD (fraction to the boundary
// applied by the caller). S must be positive definite.
StepInfo max_step(const Mat& S, const Mat& dS) {
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) return {0.0, false};
  Mat m = llt.matrixL().solve(dS);
  m = llt.matrixL().solve(Mat(m.transpose()));
  Eigen::SelfAdjointEigenSolver<Mat> es(canon_sym(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return {0.0, false};
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= -1e-300) return {std::numeric_limits<double>::infinity(), true};
  return {-1.0 / lmin, true};
}

// NT scaling W with W Z W = X (both arguments positive definite).
bool nt_scaling(const Mat& X, const Mat& Z, Mat* W) {
  Eigen::SelfAdjointEigenSolver<Mat> ez(Z);
  if (ez.info() != Eigen::Success || ez.eigenvalues().minCoeff() <= 0.0)
    return false;
  const Mat u = ez.eigenvectors();
  const Vec dz = ez.eigenvalues();
  const Mat zh = u * dz.cwiseSqrt().asDiagonal() * u.transpose();
  const Mat zih = u * dz.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(canon_sym(zh * X * zh));
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    return false;
  const Mat sh = es.eigenvectors() *
                 es.eigenvalues().cwiseSqrt().asDiagonal() *
                 es.eigenvectors().transpose();
  *W = canon_sym(zih * sh * zih);
  return true;
}

struct WitnessCheck {
  bool accepted = false;
  double margin = 0.0;
  std::vector<ConstraintEval> rows;
};

// Independent recheck in original units: every block must clear a comfortable
// fraction of its margin (stronger than the reported satisfied flag, which
// uses delta/2).
WitnessCheck check_witness(const Compiled& cc, const std::vector<double>& y) {
  WitnessCheck out;
  out.accepted = true;
  out.margin = std::numeric_limits<double>::infinity();
  for (const NormalizedCon& nc : cc.cons) {
    const Mat m = eval_normalized(nc, cc, y);
    const double lmin = lambda_min(SymMat(canon_sym(m)));
    out.rows.push_back({nc.name, lmin, lmin >= 0.5 * nc.delta});
    if (!nc.implicit) out.margin = std::min(out.margin, lmin);
    if (lmin < 0.6 * nc.delta) out.accepted = false;
  }
  return out;
}

}  // namespace

Feasibility solve_feasibility(const Problem& problem,
                              const SolveOptions& opts) {
  Compiled cc = compile(problem, opts);
  const int p = cc.total_dof;
  const int tix = p;  // index of the phase-I slack level t
  const std::size_t nb = cc.blocks.size();

  std::vector<Mat> X(nb), Z(nb);
  int total_dim = 0;
  for (std::size_t c = 0; c < nb; ++c) {
    X[c] = Mat::Identity(cc.blocks[c].dim, cc.blocks[c].dim);
    Z[c] = Mat::Identity(cc.blocks[c].dim, cc.blocks[c].dim);
    total_dim += cc.blocks[c].dim;
  }
  std::vector<double> y(static_cast<std::size_t>(p + 1), 0.0);

  Feasibility result;
  auto diagnostics = [&](double mu, double rp, double rd) {
    result.phase1_objective = y[static_cast<std::size_t>(tix)];
    result.duality_gap = mu;
    result.primal_residual = rp;
    result.dual_residual = rd;
  };

  auto try_witness = [&]() -> bool {
    const WitnessCheck wc = check_witness(cc, y);
    if (!wc.accepted) return false;
    result.status = FeasStatus::StrictlyFeasible;
    result.witness = assignment_from_coords(cc, y);
    result.margin = wc.margin;
    result.recheck = wc.rows;
    result.detail = "strictly feasible; witness rechecked in original units";
    return true;
  };

  std::vector<Mat> Rd(nb), W(nb), Zinv(nb), WRW(nb);
  std::vector<std::vector<Mat>> G(nb);
  Mat H(p + 1, p + 1);
  Vec rhs0(p + 1), q(p + 1), rp_vec(p + 1);
  int stall = 0;
  double rp_prev = std::numeric_limits<double>::infinity();
  int rp_stall = 0;

  // Clean the primal iterate into a usable multiplier certificate by
  // alternating projections: exact linear solve onto the affine certificate
  // constraints, then a clip back onto the PSD cone. The loop runs while the
  // clip magnitude keeps shrinking and always ends on the affine projection,
  // so the returned iterate annihilates the coefficient matrices to
  // factorization precision; how PSD it remained is for the caller to judge.
  auto polish_multiplier = [&](std::vector<Mat>* xp) -> bool {
    Mat h0 = Mat::Zero(p + 1, p + 1);
    for (std::size_t c = 0; c < nb; ++c) {
      const SolverBlock& sb = cc.blocks[c];
      const std::size_t nf = sb.f.size();
      for (std::size_t a = 0; a < nf; ++a) {
        const int ja = sb.f[a].first;
        for (std::size_t b2 = a; b2 < nf; ++b2) {
          const int jb = sb.f[b2].first;
          const double v =
              sb.f[a].second.cwiseProduct(sb.f[b2].second).sum();
          h0(ja, jb) += v;
          if (ja != jb) h0(jb, ja) += v;
        }
        const double vt = sb.f[a].second.trace();
        h0(ja, tix) += vt;
        h0(tix, ja) += vt;
      }
      h0(tix, tix) += sb.dim;
    }
    const double ridge = 1e-12 * (1.0 + h0.diagonal().cwiseAbs().maxCoeff());
    Eigen::LDLT<Mat> fac(h0 + ridge * Mat::Identity(p + 1, p + 1));
    if (fac.info() != Eigen::Success) return false;

    auto project_affine = [&](std::vector<Mat>* v) -> bool {
      Vec rhs = Vec::Zero(p + 1);
      for (std::size_t c = 0; c < nb; ++c) {
        for (const auto& [j, f] : cc.blocks[c].f) {
          rhs(j) -= f.cwiseProduct((*v)[c]).sum();
        }
        rhs(tix) -= (*v)[c].trace();
      }
      rhs(tix) += 1.0;
      const Vec w = fac.solve(rhs);
      if (!w.allFinite()) return false;
      for (std::size_t c = 0; c < nb; ++c) {
        Mat x = (*v)[c];
        for (const auto& [j, f] : cc.blocks[c].f) x += w(j) * f;
        x += w(tix) * Mat::Identity(cc.blocks[c].dim, cc.blocks[c].dim);
        (*v)[c] = canon_sym(x);
      }
      return true;
    };

    *xp = X;
    // Sublinear tail guard: clean certificates converge in tens of rounds;
    // degenerate ones decay like a power law and never reach tolerance, so
    // stop once a 100-round window stops buying at least ten percent.
    double window_clip = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 20000; ++round) {
      if (!project_affine(xp)) return false;
      double clip_mag = 0.0;
      for (std::size_t c = 0; c < nb; ++c) {
        Eigen::SelfAdjointEigenSolver<Mat> es((*xp)[c]);
        if (es.info() != Eigen::Success) return false;
        const double lmin = es.eigenvalues().minCoeff();
        if (lmin < 0.0) {
          clip_mag = std::max(clip_mag, -lmin);
          const Vec clipped = es.eigenvalues().cwiseMax(0.0);
          (*xp)[c] = canon_sym(es.eigenvectors() * clipped.asDiagonal() *
                               es.eigenvectors().transpose());
        }
      }
      if (trace_enabled() && round % 500 == 0) {
        std::fprintf(stderr, "[lmi] polish round=%5d clip=%.3e\n", round,
                     clip_mag);
      }
      if (clip_mag < 1e-13) break;
      if (round % 100 == 99) {
        if (clip_mag > 0.9 * window_clip) break;  // stalled
        window_clip = clip_mag;
      }
    }
    return project_affine(xp);
  };

  for (int iter = 0; iter < opts.budget; ++iter) {
    result.iterations = iter;

    // Residuals and barrier parameter.
    double mu = 0.0;
    double rd_norm = 0.0;
    for (std::size_t c = 0; c < nb; ++c) {
      const SolverBlock& sb = cc.blocks[c];
      Mat r = sb.cshift - Z[c];
      for (const auto& [j, f] : sb.f) r -= y[static_cast<std::size_t>(j)] * f;
      r -= y[static_cast<std::size_t>(tix)] *
           Mat::Identity(sb.dim, sb.dim);
      Rd[c] = canon_sym(r);
      rd_norm = std::max(rd_norm, Rd[c].cwiseAbs().maxCoeff());
      mu += X[c].cwiseProduct(Z[c]).sum();
      if (!X[c].allFinite() || !Z[c].allFinite()) {
        throw NumericalBreakdown("iterate became non-finite at iteration " +
                                 std::to_string(iter));
      }
    }
    mu /= total_dim;

    rp_vec.setZero();
    for (std::size_t c = 0; c < nb; ++c) {
      for (const auto& [j, f] : cc.blocks[c].f) {
        rp_vec(j) -= f.cwiseProduct(X[c]).sum();
      }
      rp_vec(tix) -= X[c].trace();
    }
    rp_vec(tix) += 1.0;  // b = e_t
    const double rp_norm = rp_vec.cwiseAbs().maxCoeff();
    const double t_now = y[static_cast<std::size_t>(tix)];
    if (trace_enabled()) {
      std::fprintf(stderr, "[lmi] it=%3d t=%+.6e rp=%.2e rd=%.2e mu=%.2e\n",
                   iter, t_now, rp_norm, rd_norm, mu);
    }

    // Early feasible exit, checked directly against the original problem.
    if (t_now > 0.0 && try_witness()) {
      diagnostics(mu, rp_norm, rd_norm);
      return result;
    }

    // Decide when the phase-I iterate is as converged as it will get: clean
    // residuals, a primal residual that stopped improving after the gap
    // closed, or a barrier parameter at the numerical floor.
    const bool resid_converged =
        rp_norm < 1e-9 && rd_norm < 1e-9 && mu < 1e-10;
    if (mu < 1e-10 && rd_norm < 1e-9 && rp_norm > 0.9 * rp_prev) {
      ++rp_stall;
    } else {
      rp_stall = 0;
    }
    rp_prev = rp_norm;
    if (resid_converged || rp_stall >= 3 || mu < 5e-13) {
      diagnostics(mu, rp_norm, rd_norm);
      // For homogeneous problems the optimum sits at exactly minus the
      // normalized margin, so the threshold keys off that floor.
      if (t_now <= -0.5 * cc.margin_floor) {
        if (!opts.collect_certificate) {
          result.status = FeasStatus::Infeasible;
          result.detail = "phase-I optimum is negative (t = " +
                          std::to_string(t_now) +
                          "); certificate collection disabled";
          return result;
        }
        // The primal iterate is a PSD multiplier refuting feasibility: once
        // it annihilates every coefficient matrix, a negative pairing with
        // the margin-shifted constants proves emptiness at the margin. Try
        // the polished iterate first, then the raw interior-point iterate
        // (PSD by construction, annihilation within the primal residual).
        struct CertEval {
          bool ok = false;
          double pairing = 0.0;
          double ann_norm = 0.0;
          double resid = 0.0;
        };
        auto eval_cert = [&](const std::vector<Mat>& cand) -> CertEval {
          CertEval ce;
          bool psd_ok = true;
          double trsum = 0.0;
          for (std::size_t c = 0; c + 1 < nb; ++c) {
            const double lmax = std::max(1.0, cand[c].cwiseAbs().maxCoeff());
            if (lambda_min(SymMat(cand[c])) < -1e-9 * lmax) psd_ok = false;
            trsum += cand[c].trace();
          }
          if (!(trsum > 1e-300)) return ce;
          double pairing = 0.0;
          Vec ann = Vec::Zero(std::max(p, 1));
          for (std::size_t c = 0; c + 1 < nb; ++c) {
            pairing += cc.blocks[c].cshift.cwiseProduct(cand[c]).sum();
            for (const auto& [j, f] : cc.blocks[c].f) {
              ann(j) += f.cwiseProduct(cand[c]).sum();
            }
          }
          ce.pairing = pairing / trsum;
          if (p > 0) {
            ce.ann_norm = ann.head(p).norm() / trsum;
            ce.resid = ann.head(p).cwiseAbs().maxCoeff() / trsum;
          }
          ce.ok = psd_ok && ce.pairing < -0.25 * cc.margin_floor &&
                  ce.ann_norm <= std::max(1e-10, 1e-3 * (-ce.pairing));
          return ce;
        };
        std::vector<Mat> xp;
        CertEval chosen;
        if (polish_multiplier(&xp)) chosen = eval_cert(xp);
        if (!chosen.ok) {
          const CertEval raw = eval_cert(X);
          if (raw.ok) chosen = raw;
          if (trace_enabled()) {
            std::fprintf(stderr,
                         "[lmi] cert raw: pair=%.3e ann=%.3e ok=%d\n",
                         raw.pairing, raw.ann_norm, raw.ok ? 1 : 0);
          }
        }
        result.certificate_pairing = chosen.pairing;
        result.certificate_residual = chosen.resid;
        if (chosen.ok) {
          result.status = FeasStatus::Infeasible;
          result.detail =
              "infeasible at the requested margin: PSD multiplier pairs to " +
              std::to_string(chosen.pairing) +
              " with annihilation residual " + std::to_string(chosen.ann_norm);
        } else {
          result.status = FeasStatus::Unknown;
          result.detail = "phase-I optimum negative (t = " +
                          std::to_string(t_now) +
                          ") but certificate validation failed";
        }
        return result;
      }
      result.status = FeasStatus::Unknown;
      result.detail = "phase-I optimum is marginal (t = " +
                      std::to_string(t_now) + "); no strict conclusion";
      return result;
    }

    // NT scalings.
    bool scaling_ok = true;
    for (std::size_t c = 0; c < nb; ++c) {
      if (!nt_scaling(X[c], Z[c], &W[c])) {
        scaling_ok = false;
        break;
      }
      Eigen::LLT<Mat> lz(Z[c]);
      if (lz.info() != Eigen::Success) {
        scaling_ok = false;
        break;
      }
      Zinv[c] = lz.solve(Mat::Identity(cc.blocks[c].dim, cc.blocks[c].dim));
      WRW[c] = canon_sym(W[c] * Rd[c] * W[c]);
    }
    if (!scaling_ok) {
      diagnostics(mu, rp_norm, rd_norm);
      result.status = FeasStatus::Unknown;
      result.detail = "scaling breakdown (iterate left the cone)";
      return result;
    }

    // Schur complement H and predictor right-hand side.
    H.setZero();
    rhs0.setZero();
    q.setZero();
    for (std::size_t c = 0; c < nb; ++c) {
      const SolverBlock& sb = cc.blocks[c];
      const std::size_t nf = sb.f.size();
      G[c].assign(nf + 1, Mat());
      for (std::size_t a = 0; a < nf; ++a) {
        G[c][a] = W[c] * sb.f[a].second * W[c];
      }
      G[c][nf] = W[c] * W[c];  // t slot (F = I)
      for (std::size_t a = 0; a < nf; ++a) {
        const int ja = sb.f[a].first;
        for (std::size_t b2 = a; b2 < nf; ++b2) {
          const int jb = sb.f[b2].first;
          const double v = sb.f[a].second.cwiseProduct(G[c][b2]).sum();
          H(ja, jb) += v;
          if (ja != jb) H(jb, ja) += v;
        }
        const double vt = G[c][a].trace();
        H(ja, tix) += vt;
        H(tix, ja) += vt;
        rhs0(ja) += sb.f[a].second.cwiseProduct(WRW[c]).sum();
        q(ja) += sb.f[a].second.cwiseProduct(Zinv[c]).sum();
      }
      H(tix, tix) += G[c][nf].trace();
      rhs0(tix) += WRW[c].trace();
      q(tix) += Zinv[c].trace();
    }
    rhs0(tix) += 1.0;  // b = e_t

    Eigen::LLT<Mat> hfac;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
      hfac.compute(H + ridge * Mat::Identity(p + 1, p + 1));
      if (hfac.info() == Eigen::Success) break;
      ridge = (ridge == 0.0)
                  ? 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff())
                  : ridge * 1000.0;
    }
    if (hfac.info() != Eigen::Success) {
      diagnostics(mu, rp_norm, rd_norm);
      result.status = FeasStatus::Unknown;
      result.detail = "Schur system factorization failed";
      return result;
    }

    auto directions = [&](const Vec& rhs, double sigma_mu,
                          std::vector<Mat>* dX, std::vector<Mat>* dZ,
                          Vec* dy) {
      *dy = hfac.solve(rhs);
      dX->resize(nb);
      dZ->resize(nb);
      for (std::size_t c = 0; c < nb; ++c) {
        const SolverBlock& sb = cc.blocks[c];
        Mat dz = Rd[c];
        for (const auto& [j, f] : sb.f) dz -= (*dy)(j)*f;
        dz -= (*dy)(tix)*Mat::Identity(sb.dim, sb.dim);
        (*dZ)[c] = canon_sym(dz);
        Mat dx = -X[c] - W[c] * (*dZ)[c] * W[c];
        if (sigma_mu > 0.0) dx += sigma_mu * Zinv[c];
        (*dX)[c] = canon_sym(dx);
      }
    };

    auto step_lengths = [&](const std::vector<Mat>& dX,
                            const std::vector<Mat>& dZ, double* ap,
                            double* ad) -> bool {
      double sp = std::numeric_limits<double>::infinity();
      double sd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < nb; ++c) {
        const StepInfo ix = max_step(X[c], dX[c]);
        const StepInfo iz = max_step(Z[c], dZ[c]);
        if (!ix.ok || !iz.ok) return false;
        sp = std::min(sp, ix.alpha);
        sd = std::min(sd, iz.alpha);
      }
      *ap = std::min(1.0, 0.95 * sp);
      *ad = std::min(1.0, 0.95 * sd);
      return true;
    };

    // Predictor (sigma = 0).
    std::vector<Mat> dXa, dZa;
    Vec dya;
    directions(rhs0, 0.0, &dXa, &dZa, &dya);
    double apa = 0.0, ada = 0.0;
    if (!step_lengths(dXa, dZa, &apa, &ada)) {
      diagnostics(mu, rp_norm, rd_norm);
      result.status = FeasStatus::Unknown;
      result.detail = "step computation breakdown";
      return result;
    }
    double mu_aff = 0.0;
    for (std::size_t c = 0; c < nb; ++c) {
      mu_aff += (X[c] + apa * dXa[c]).cwiseProduct(Z[c] + ada * dZa[c]).sum();
    }
    mu_aff /= total_dim;
    double sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3);
    sigma = std::clamp(sigma, 1e-8, 0.999);
    // Infeasible start: while the linear residuals dominate the barrier
    // parameter, hold the centering up so feasibility restoration can catch
    // up before the central path collapses.
    if (rp_norm + rd_norm > 10.0 * mu) sigma = std::max(sigma, 0.5);

    // Corrector (reuses the factorization).
    std::vector<Mat> dX, dZ;
    Vec dy;
    directions(rhs0 - sigma * mu * q, sigma * mu, &dX, &dZ, &dy);
    double ap = 0.0, ad = 0.0;
    if (!step_lengths(dX, dZ, &ap, &ad)) {
      diagnostics(mu, rp_norm, rd_norm);
      result.status = FeasStatus::Unknown;
      result.detail = "step computation breakdown";
      return result;
    }

    for (std::size_t c = 0; c < nb; ++c) {
      X[c] = canon_sym(X[c] + ap * dX[c]);
      Z[c] = canon_sym(Z[c] + ad * dZ[c]);
    }
    for (int k = 0; k <= p; ++k) {
      y[static_cast<std::size_t>(k)] += ad * dy(k);
    }

    if (ap < 1e-8 && ad < 1e-8) {
      if (++stall >= 5) {
        diagnostics(mu, rp_norm, rd_norm);
        result.status = FeasStatus::Unknown;
        result.detail = "solver stalled (steps collapsed)";
        return result;
      }
    } else {
      stall = 0;
    }
  }

  // Budget exhausted: last witness attempt, then give up.
  result.iterations = opts.budget;
  if (y[static_cast<std::size_t>(tix)] > 0.0 && try_witness()) return result;
  result.status = FeasStatus::Unknown;
  result.phase1_objective = y[static_cast<std::size_t>(tix)];
  result.detail = "iteration budget exhausted without a conclusion";
  return result;
}

Mat eval_block(const Problem& problem, const AffineConstraint& c,
               const Assignment& assignment) {
  Mat m = c.constant.size() == 0 ? Mat::Zero(c.dim, c.dim)
                                 : Mat(canon_sym(c.constant));
  for (const auto& [vname, map] : c.terms) {
    auto it = assignment.find(vname);
    if (it == assignment.end()) {
      throw MissingVariable("assignment lacks variable '" + vname + "'");
    }
    bool symmetric_var = false;
    for (const VarSpec& v : problem.variables) {
      if (v.name == vname) {
        symmetric_var = v.shape == VarShape::Symmetric ||
                        v.shape == VarShape::SymmetricPsd;
        break;
      }
    }
    const Mat value =
        symmetric_var ? Mat(canon_sym(it->second)) : it->second;
    m += map(value);
  }
  return canon_sym(m);
}

std::vector<ConstraintEval> eval_constraints(const Problem& problem,
                                             const Assignment& assignment,
                                             double margin) {
  std::vector<ConstraintEval> out;
  for (const AffineConstraint& c : problem.constraints) {
    const double sense = (c.sense == Sense::PsdStrict) ? 1.0 : -1.0;
    const Mat m = sense * eval_block(problem, c, assignment);
    const Mat c0 = c.constant.size() == 0 ? Mat::Zero(c.dim, c.dim)
                                          : Mat(sense * c.constant);
    const double delta = margin > 0.0 ? margin : default_margin(c0);
    const double lmin = lambda_min(SymMat(canon_sym(m)));
    out.push_back({c.name, lmin, lmin >= 0.5 * delta});
  }
  return out;
}

std::string problem_to_json(const Problem& problem) {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const VarSpec& v : problem.variables) {
    nlohmann::json jv;
    jv["name"] = v.name;
    switch (v.shape) {
      case VarShape::Scalar: jv["shape"] = "scalar"; break;
      case VarShape::Full: jv["shape"] = "full"; break;
      case VarShape::Symmetric: jv["shape"] = "symmetric"; break;
      case VarShape::SymmetricPsd: jv["shape"] = "symmetric_psd"; break;
    }
    jv["rows"] = v.rows;
    jv["cols"] = v.cols;
    if (v.lower_bound) jv["lower_bound"] = *v.lower_bound;
    doc["variables"].push_back(jv);
  }
  auto mat_to_json = [](const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (long i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  doc["constraints"] = nlohmann::json::array();
  for (const AffineConstraint& c : problem.constraints) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["dim"] = c.dim;
    jc["sense"] = c.sense == Sense::PsdStrict ? "psd_strict" : "nsd_strict";
    jc["constant"] = mat_to_json(
        c.constant.size() == 0 ? Mat::Zero(c.dim, c.dim) : c.constant);
    nlohmann::json terms;
    for (const auto& [vname, map] : c.terms) {
      const VarSpec* spec = nullptr;
      for (const VarSpec& v : problem.variables) {
        if (v.name == vname) spec = &v;
      }
      if (!spec) continue;
      nlohmann::json coeffs = nlohmann::json::array();
      for (int j = 0; j < dof_count(*spec); ++j) {
        coeffs.push_back(mat_to_json(map(basis_element(*spec, j))));
      }
      terms[vname] = coeffs;
    }
    jc["terms"] = terms;
    doc["constraints"].push_back(jc);
  }
  return doc.dump();
}

}  // namespace tct::lmi
