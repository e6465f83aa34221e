#include "tct/ets_design.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tct/errors.hpp"
#include "tct/parallel.hpp"

namespace tct {
namespace {

Mat embed(const Mat& block, int dim, int r0, int c0) {
  Mat out = Mat::Zero(dim, dim);
  out.block(r0, c0, block.rows(), block.cols()) = block;
  return out;
}

Mat symm(const Mat& m) { return m + m.transpose(); }

Mat v4(const Mat& a, const Mat& b, const Mat& c, const Mat& d) {
  Mat out(a.rows() + b.rows() + c.rows() + d.rows(), a.cols());
  out << a, b, c, d;
  return out;
}

Mat v2(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

// Selectors over the seven-block analysis coordinate
//   [x(t); x(t+1); x(τ_j); x(τ_{j+1}); runmean up to t; runmean after t;
//    x(t_k)]
// and the fixed combination matrices the interval certificates contract
// against. Everything here is constant for a given state dimension.
struct XiMaps {
  int n;
  Mat l0, l1, l2, l3, l4, l5, l6, l7;
  Mat pi1, pi2, pi3, pi4, pi5, pi6, pi7, pi8, pi9, pi10;
  Mat e21;

  explicit XiMaps(int n_in) : n(n_in) {
    l0 = selector(0, n, 7);
    l1 = selector(1, n, 7);
    l2 = selector(2, n, 7);
    l3 = selector(3, n, 7);
    l4 = selector(4, n, 7);
    l5 = selector(5, n, 7);
    l6 = selector(6, n, 7);
    l7 = selector(7, n, 7);
    pi1 = v4(l3, l4, l2 - l3, l5 + l2 - l3);
    pi2 = v4(-l3, -l4, l4 - l2, l6 - l1 - l4);
    pi3 = v4(l0, l0, l1 - l3, l5 - l3);
    pi4 = v4(l0, l0, l4 - l1, l6 - l4);
    pi5 = v4(l3, l4, l0, l5);
    pi6 = v4(-l3, -l4, l1 - l2, -l1);
    pi7 = v4(l3, l4, l2 - l1, l2);
    pi8 = v4(l3, l4, l0, l6);
    pi9 = v2(l1 - l3, l1 + l3 - 2.0 * l5);
    pi10 = v2(l4 - l1, l4 + l1 - 2.0 * l6);
    e21 = l2 - l1;
  }
};

// Terms shared by every certificate family: the Lyapunov / summation-bound
// quadratic forms over the seven-block coordinate, placed at row offset o_in
// of a dim x dim block whose trailing 2n rows (offset o_tail) carry the
// slack coordinates, with sigma ∈ {1, 2} selecting the interval vertex case
// and the matching free-multiplier coupling.
void add_core_terms(std::map<std::string, lmi::LinearMap>& terms,
                    const XiMaps& sel, double s1, double s2, int h, int sigma,
                    int dim, int o_in, int o_tail,
                    const std::string& omega_name) {
  const int n = sel.n;
  const double hd = static_cast<double>(h);
  {
    Mat lp = sel.l2, lm = sel.l1;
    terms["P"] = [lp, lm, dim, o_in](const Mat& p) {
      return embed(Mat(lp.transpose() * p * lp - lm.transpose() * p * lm), dim,
                   o_in, o_in);
    };
  }
  {
    const double c1 = -1.0 + (sigma == 2 ? hd : 0.0);
    const bool tail = (sigma == 1);
    Mat e21 = sel.e21;
    terms["R1"] = [e21, c1, hd, tail, n, dim, o_in, o_tail](const Mat& r) {
      Mat out = embed(Mat(c1 * (e21.transpose() * r * e21)), dim, o_in, o_in);
      if (tail) {
        out.block(o_tail, o_tail, n, n) -= hd * r;
        out.block(o_tail + n, o_tail + n, n, n) -= 3.0 * hd * r;
      }
      return out;
    };
  }
  {
    const double c2 = 1.0 + (sigma == 1 ? hd : 0.0);
    const bool tail = (sigma == 2);
    Mat e21 = sel.e21;
    terms["R2"] = [e21, c2, hd, tail, n, dim, o_in, o_tail](const Mat& r) {
      Mat out = embed(Mat(c2 * (e21.transpose() * r * e21)), dim, o_in, o_in);
      if (tail) {
        out.block(o_tail, o_tail, n, n) -= hd * r;
        out.block(o_tail + n, o_tail + n, n, n) -= 3.0 * hd * r;
      }
      return out;
    };
  }
  {
    Mat l3 = sel.l3, l7 = sel.l7;
    terms[omega_name] = [s1, s2, l3, l7, dim, o_in](const Mat& w) {
      Mat diff = l3 - l7;
      Mat inner = s1 * (l3.transpose() * w * l3) +
                  s2 * (l7.transpose() * w * l7) -
                  diff.transpose() * w * diff;
      return embed(inner, dim, o_in, o_in);
    };
  }
  {
    Mat p1 = sel.pi1, p2 = sel.pi2, p3 = sel.pi3, p4 = sel.pi4;
    Mat pa = (sigma == 1) ? sel.pi5 : sel.pi7;
    Mat pb = (sigma == 1) ? sel.pi6 : sel.pi8;
    terms["S"] = [p1, p2, p3, p4, pa, pb, hd, dim, o_in](const Mat& s) {
      Mat inner =
          symm(Mat(p1.transpose() * s * p2 - p3.transpose() * s * p4)) +
          hd * symm(Mat(pa.transpose() * s * pb));
      return embed(inner, dim, o_in, o_in);
    };
  }
  {
    Mat p9 = sel.pi9;
    const bool off = (sigma == 1);
    terms["N1"] = [p9, hd, off, n, dim, o_in, o_tail](const Mat& nm) {
      Mat out = embed(symm(Mat(nm * p9)), dim, o_in, o_in);
      if (off) {
        out.block(o_in, o_tail, 7 * n, 2 * n) += hd * nm;
        out.block(o_tail, o_in, 2 * n, 7 * n) += hd * nm.transpose();
      }
      return out;
    };
  }
  {
    Mat p10 = sel.pi10;
    const bool off = (sigma == 2);
    terms["N2"] = [p10, hd, off, n, dim, o_in, o_tail](const Mat& nm) {
      Mat out = embed(symm(Mat(nm * p10)), dim, o_in, o_in);
      if (off) {
        out.block(o_in, o_tail, 7 * n, 2 * n) += hd * nm;
        out.block(o_tail, o_in, 2 * n, 7 * n) += hd * nm.transpose();
      }
      return out;
    };
  }
}

std::string vertex_name(int h, int sigma) {
  return "vertex_h" + std::to_string(h) + "_s" + std::to_string(sigma);
}

void require_interval(int h) {
  if (h < 1) {
    throw ConfigError("sampling interval must be >= 1, got " +
                      std::to_string(h));
  }
}

void require_gain_shape(const Mat& k, int n, int m, const char* what) {
  if (k.rows() != m || k.cols() != n) {
    throw DimensionMismatch(std::string(what) + " must be " +
                            std::to_string(m) + "x" + std::to_string(n) +
                            ", got " + std::to_string(k.rows()) + "x" +
                            std::to_string(k.cols()));
  }
  if (!all_finite(k)) {
    throw BadProblem(std::string(what) + " has non-finite entries");
  }
}

}  // namespace

void EtsParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (h_low < 1) fail("h_low must be >= 1, got " + std::to_string(h_low));
  if (h_high < h_low) {
    fail("h_high must be >= h_low, got h_low=" + std::to_string(h_low) +
         " h_high=" + std::to_string(h_high));
  }
  if (h_runtime != 0 && (h_runtime < h_low || h_runtime > h_high)) {
    fail("h_runtime must be 0 or lie in [h_low, h_high], got " +
         std::to_string(h_runtime));
  }
  if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0)) {
    fail("trigger weights sigma1, sigma2 must be >= 0");
  }
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    fail("trigger decay lambda must lie in [0, 1), got " +
         std::to_string(lambda));
  }
  if (!(theta > 0.0)) {
    fail("trigger threshold theta must be > 0, got " + std::to_string(theta));
  }
  if (1.0 - lambda - 1.0 / theta < -1e-12) {
    fail("trigger nonnegativity requires 1 - lambda - 1/theta >= 0, got " +
         std::to_string(1.0 - lambda - 1.0 / theta));
  }
  if (!(eta0 >= 0.0)) {
    fail("initial trigger level eta0 must be >= 0, got " +
         std::to_string(eta0));
  }
  if (!std::isfinite(descriptor_eps)) {
    fail("descriptor_eps must be finite, got " +
         std::to_string(descriptor_eps));
  }
}

lmi::Problem build_stability_lmi(const LtiModel& model, const Mat& k,
                            const EtsParams& params, int h) {
  params.validate();
  require_interval(h);
  const int n = model.n();
  const int m = model.m();
  require_gain_shape(k, n, m, "gain");
  XiMaps sel(n);
  lmi::Problem prob;
  prob.variables = {
      lmi::VarSpec::symmetric_psd("P", n),
      lmi::VarSpec::symmetric_psd("R1", n),
      lmi::VarSpec::symmetric_psd("R2", n),
      lmi::VarSpec::symmetric_psd("Omega", n),
      lmi::VarSpec::full("S", 4 * n, 4 * n),
      lmi::VarSpec::full("N1", 7 * n, 2 * n),
      lmi::VarSpec::full("N2", 7 * n, 2 * n),
      lmi::VarSpec::full("F", 7 * n, n),
  };
  Mat cf = model.a * sel.l1 + model.b * k * sel.l7 - sel.l2;
  for (int sigma : {1, 2}) {
    lmi::AffineConstraint c;
    c.name = vertex_name(h, sigma);
    c.dim = 9 * n;
    c.sense = lmi::Sense::NsdStrict;
    add_core_terms(c.terms, sel, params.sig1(), params.sig2(), h, sigma,
                   c.dim, 0, 7 * n, "Omega");
    const int dim = c.dim;
    c.terms["F"] = [cf, dim](const Mat& f) {
      return embed(symm(Mat(f * cf)), dim, 0, 0);
    };
    prob.constraints.push_back(std::move(c));
  }
  return prob;
}

lmi::Problem build_data_codesign_lmi(const DataRep& rep, const EtsParams& params, int h,
                            const std::optional<Mat>& fixed_k) {
  params.validate();
  require_interval(h);
  const int n = rep.n;
  const int m = rep.zdim - n;
  if (m < 1) {
    throw DimensionMismatch(
        "data representation must cover at least one input channel");
  }
  if (fixed_k) require_gain_shape(*fixed_k, n, m, "prescribed gain");
  XiMaps sel(n);
  Mat d_mat = (sel.l1 + params.descriptor_eps * sel.l2).transpose();  // 7n x n
  const int dim = (n + m) + 7 * n + 2 * n;
  const int o_top = 0;
  const int o_in = n + m;
  const int o_tail = n + m + 7 * n;
  lmi::Problem prob;
  prob.variables = {
      lmi::VarSpec::scalar("eps", 0.0),
      lmi::VarSpec::symmetric_psd("P", n),
      lmi::VarSpec::symmetric_psd("R1", n),
      lmi::VarSpec::symmetric_psd("R2", n),
      lmi::VarSpec::symmetric_psd("Omega_z", n),
      lmi::VarSpec::full("S", 4 * n, 4 * n),
      lmi::VarSpec::full("N1", 7 * n, 2 * n),
      lmi::VarSpec::full("N2", 7 * n, 2 * n),
      lmi::VarSpec::full("G", n, n),
  };
  if (!fixed_k) prob.variables.push_back(lmi::VarSpec::full("K_c", m, n));
  Mat q_c = rep.q_c;
  Mat s_cd = rep.s_c * d_mat.transpose();            // (n+m) x 7n
  Mat drd = d_mat * rep.r_c * d_mat.transpose();     // 7n x 7n
  for (int sigma : {1, 2}) {
    lmi::AffineConstraint c;
    c.name = vertex_name(h, sigma);
    c.dim = dim;
    c.sense = lmi::Sense::NsdStrict;
    add_core_terms(c.terms, sel, params.sig1(), params.sig2(), h, sigma, dim,
                   o_in, o_tail, "Omega_z");
    c.terms["eps"] = [q_c, s_cd, drd, n, m, dim, o_top, o_in](const Mat& e) {
      const double ev = e(0, 0);
      Mat out = Mat::Zero(dim, dim);
      out.block(o_top, o_top, n + m, n + m) = ev * q_c;
      out.block(o_in, o_in, 7 * n, 7 * n) = ev * drd;
      out.block(o_top, o_in, n + m, 7 * n) = ev * s_cd;
      out.block(o_in, o_top, 7 * n, n + m) = ev * s_cd.transpose();
      return out;
    };
    Mat l1 = sel.l1, l2 = sel.l2, l7 = sel.l7;
    if (fixed_k) {
      Mat fk = *fixed_k;
      c.terms["G"] = [d_mat, l1, l2, l7, fk, n, m, dim, o_top,
                      o_in](const Mat& g) {
        Mat out = Mat::Zero(dim, dim);
        out.block(o_in, o_in, 7 * n, 7 * n) = symm(Mat(-(d_mat * g * l2)));
        Mat rows(n + m, 7 * n);
        rows << g * l1, fk * g * l7;
        out.block(o_top, o_in, n + m, 7 * n) += rows;
        out.block(o_in, o_top, 7 * n, n + m) += rows.transpose();
        return out;
      };
    } else {
      c.terms["G"] = [d_mat, l1, l2, n, dim, o_top, o_in](const Mat& g) {
        Mat out = Mat::Zero(dim, dim);
        out.block(o_in, o_in, 7 * n, 7 * n) = symm(Mat(-(d_mat * g * l2)));
        Mat rows = g * l1;
        out.block(o_top, o_in, n, 7 * n) += rows;
        out.block(o_in, o_top, 7 * n, n) += rows.transpose();
        return out;
      };
      c.terms["K_c"] = [l7, n, m, dim, o_top, o_in](const Mat& kc) {
        Mat out = Mat::Zero(dim, dim);
        Mat rows = kc * l7;
        out.block(o_top + n, o_in, m, 7 * n) += rows;
        out.block(o_in, o_top + n, 7 * n, m) += rows.transpose();
        return out;
      };
    }
    prob.constraints.push_back(std::move(c));
  }
  return prob;
}

lmi::Problem build_model_codesign_lmi(const LtiModel& model,
                                  const EtsParams& params, int h,
                                  const std::optional<Mat>& fixed_k) {
  params.validate();
  require_interval(h);
  const int n = model.n();
  const int m = model.m();
  if (fixed_k) require_gain_shape(*fixed_k, n, m, "prescribed gain");
  XiMaps sel(n);
  Mat d_mat = (sel.l1 + params.descriptor_eps * sel.l2).transpose();  // 7n x n
  const int dim = 9 * n;
  lmi::Problem prob;
  prob.variables = {
      lmi::VarSpec::symmetric_psd("P", n),
      lmi::VarSpec::symmetric_psd("R1", n),
      lmi::VarSpec::symmetric_psd("R2", n),
      lmi::VarSpec::symmetric_psd("Omega_z", n),
      lmi::VarSpec::full("S", 4 * n, 4 * n),
      lmi::VarSpec::full("N1", 7 * n, 2 * n),
      lmi::VarSpec::full("N2", 7 * n, 2 * n),
      lmi::VarSpec::full("G", n, n),
  };
  if (!fixed_k) prob.variables.push_back(lmi::VarSpec::full("K_c", m, n));
  for (int sigma : {1, 2}) {
    lmi::AffineConstraint c;
    c.name = vertex_name(h, sigma);
    c.dim = dim;
    c.sense = lmi::Sense::NsdStrict;
    add_core_terms(c.terms, sel, params.sig1(), params.sig2(), h, sigma, dim,
                   0, 7 * n, "Omega_z");
    Mat a = model.a;
    Mat b = model.b;
    Mat l1 = sel.l1, l2 = sel.l2, l7 = sel.l7;
    if (fixed_k) {
      Mat bk = b * (*fixed_k);
      c.terms["G"] = [d_mat, a, bk, l1, l2, l7, dim](const Mat& g) {
        Mat core = d_mat * (a * g * l1 + bk * g * l7 - g * l2);
        return embed(symm(core), dim, 0, 0);
      };
    } else {
      c.terms["G"] = [d_mat, a, l1, l2, dim](const Mat& g) {
        return embed(symm(Mat(d_mat * (a * g * l1 - g * l2))), dim, 0, 0);
      };
      c.terms["K_c"] = [d_mat, b, l7, dim](const Mat& kc) {
        return embed(symm(Mat(d_mat * b * kc * l7)), dim, 0, 0);
      };
    }
    prob.constraints.push_back(std::move(c));
  }
  return prob;
}

lmi::Problem merge_at_vertices(const std::function<lmi::Problem(int)>& builder,
                               int h_low, int h_high) {
  if (h_low < 1 || h_high < h_low) {
    throw ConfigError("vertex merge requires 1 <= h_low <= h_high, got [" +
                      std::to_string(h_low) + ", " + std::to_string(h_high) +
                      "]");
  }
  lmi::Problem merged = builder(h_low);
  if (h_low == h_high) return merged;
  lmi::Problem high = builder(h_high);
  if (merged.variables.size() != high.variables.size()) {
    throw BadProblem("vertex builds disagree on the decision variables");
  }
  for (std::size_t i = 0; i < merged.variables.size(); ++i) {
    const auto& a = merged.variables[i];
    const auto& b = high.variables[i];
    if (a.name != b.name || a.shape != b.shape || a.rows != b.rows ||
        a.cols != b.cols) {
      throw BadProblem("vertex builds disagree on variable '" + a.name + "'");
    }
  }
  std::set<std::string> names;
  for (const auto& c : merged.constraints) names.insert(c.name);
  for (auto& c : high.constraints) {
    if (!names.insert(c.name).second) {
      throw BadProblem("vertex merge would duplicate constraint '" + c.name +
                       "'");
    }
    merged.constraints.push_back(std::move(c));
  }
  return merged;
}

IntervalSearchResult max_interval_search(const std::function<lmi::Problem(int)>& builder,
                           int h_low, int h_cap, const lmi::SolveOptions& opts,
                           bool use_parallel) {
  if (h_low < 1 || h_cap < h_low) {
    throw ConfigError("interval search requires 1 <= h_low <= h_cap, got [" +
                      std::to_string(h_low) + ", " + std::to_string(h_cap) +
                      "]");
  }
  const int count = h_cap - h_low + 1;
  std::vector<lmi::Feasibility> results(count);
  std::vector<std::exception_ptr> errors(count);
  indexed_for(use_parallel, count, [&](int i) {
    try {
      lmi::Problem prob = merge_at_vertices(builder, h_low, h_low + i);
      results[i] = lmi::solve_feasibility(prob, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  IntervalSearchResult out;
  out.table.reserve(count);
  int best = -1;
  for (int i = 0; i < count; ++i) {
    out.table.emplace_back(h_low + i, results[i].status);
    if (results[i].status == lmi::FeasStatus::StrictlyFeasible) best = i;
  }
  if (best < 0) {
    throw NoFeasibleH("no feasible sampling interval in [" +
                      std::to_string(h_low) + ", " + std::to_string(h_cap) +
                      "]");
  }
  out.h_max = h_low + best;
  out.best = std::move(results[best]);
  return out;
}

EtsDesign extract_design(const lmi::Assignment& witness, DesignOrigin origin,
                         const std::optional<Mat>& fixed_k, double margin) {
  EtsDesign out;
  out.origin = origin;
  out.witness = witness;
  out.margin = margin;
  auto find = [&witness](const std::string& name) -> const Mat* {
    auto it = witness.find(name);
    return it == witness.end() ? nullptr : &it->second;
  };
  const Mat* g = find("G");
  if (g != nullptr) {
    const int n = static_cast<int>(g->rows());
    if (g->cols() != n) {
      throw DimensionMismatch("witness transformation G must be square");
    }
    Eigen::JacobiSVD<Mat> svd(*g, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(n - 1);
    if (!(smin > 0.0) || smax / smin > 1e10) {
      throw SingularG("witness transformation G is numerically singular "
                      "(cond > 1e10); the design cannot be recovered");
    }
    Mat g_inv = svd.solve(Mat::Identity(n, n));
    const Mat* omega_z = find("Omega_z");
    if (omega_z == nullptr) {
      throw MissingVariable("witness holds G but no transformed trigger "
                            "matrix Omega_z");
    }
    if (fixed_k) {
      out.k = *fixed_k;
    } else {
      const Mat* kc = find("K_c");
      if (kc == nullptr) {
        throw MissingVariable(
            "witness holds neither K_c nor a prescribed gain");
      }
      out.k = *kc * g_inv;
    }
    Mat omega = g_inv.transpose() * (*omega_z) * g_inv;
    out.omega = 0.5 * (omega + omega.transpose());
  } else {
    const Mat* omega = find("Omega");
    if (omega == nullptr) {
      throw MissingVariable(
          "witness holds neither G/Omega_z nor a direct trigger matrix Omega");
    }
    if (!fixed_k) {
      throw MissingVariable(
          "witness without a transformation G needs a prescribed gain");
    }
    out.k = *fixed_k;
    out.omega = *omega;
  }
  if (!all_finite(out.k) || !all_finite(out.omega)) {
    throw NumericalBreakdown("recovered design has non-finite entries");
  }
  return out;
}

}  // namespace tct
