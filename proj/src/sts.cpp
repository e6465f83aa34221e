#include "tct/sts.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tct/errors.hpp"
#include "tct/matrixcore.hpp"

namespace tct {
namespace sts {

namespace {

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// Smallest eigenvalue of an (almost) symmetric matrix without the SymMat
// asymmetry gate; callers symmetrize first.
double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolve failed in wait certificate");
  }
  return es.eigenvalues().minCoeff();
}

double abs_max(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Trigger form at state x: [[ (s1-1) W, W x ], [ x' W, (s2-1) x' W x ]].
Mat trigger_form(const StsParams& p, const Vec& x) {
  const int n = static_cast<int>(x.size());
  Mat q(n + 1, n + 1);
  q.topLeftCorner(n, n) = (p.sigma1 - 1.0) * p.omega;
  q.topRightCorner(n, 1) = p.omega * x;
  q.bottomLeftCorner(1, n) = (p.omega * x).transpose();
  q(n, n) = (p.sigma2 - 1.0) * x.dot(p.omega * x);
  return q;
}

// Plant-set form at state x: stack(I, [x' (Ks x)']) theta_tilde stack'.
Mat plant_set_form(const LiftedCheck& check, const StsParams& p,
                   const Vec& x) {
  const int n = check.n;
  const int sm = check.zdim - n;
  Mat stack = Mat::Zero(n + 1, n + check.zdim);
  stack.topLeftCorner(n, n) = Mat::Identity(n, n);
  stack.block(n, n, 1, n) = x.transpose();
  stack.block(n, 2 * n, 1, sm) =
      (lifted_gain(p.k, check.s) * x).transpose();
  return symmetrize(stack * check.theta_tilde * stack.transpose());
}

struct PsdOutcome {
  bool ok = false;
  double lambda = 0.0;
};

PsdOutcome psd_with_slack(const Mat& q, const Mat& g, double gamma,
                          double psd_tol) {
  const Mat value = symmetrize(q - gamma * g);
  const double lam = min_eig(value);
  const double tol = psd_tol * (1.0 + abs_max(q) + std::abs(gamma) * abs_max(g));
  return {lam >= -tol, lam};
}

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

void fnv_mat(std::uint64_t& h, const Mat& m) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  fnv_bytes(h, dims, sizeof(dims));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double v = m(r, c);
      fnv_bytes(h, &v, sizeof(v));
    }
  }
}

Mat json_to_mat(const nlohmann::json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows * cols) {
    throw SchemaError("matrix payload has wrong length");
  }
  Mat m(rows, cols);
  int idx = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = j.at(idx++).get<double>();
    }
  }
  return m;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      arr.push_back(m(r, c));
    }
  }
  return arr;
}

}  // namespace

void StsParams::validate(int n) const {
  if (sigma1 < 0.0 || sigma2 < 0.0 || !std::isfinite(sigma1) ||
      !std::isfinite(sigma2)) {
    throw ConfigError("sigma weights must be finite and nonnegative");
  }
  if (omega.rows() != n || omega.cols() != n) {
    throw ConfigError("trigger weight must be n x n");
  }
  if (!all_finite(omega)) {
    throw ConfigError("trigger weight must be finite");
  }
  const Mat asym = omega - omega.transpose();
  if (abs_max(asym) > 1e-10 * (1.0 + abs_max(omega))) {
    throw ConfigError("trigger weight must be symmetric");
  }
  if (min_eig(symmetrize(omega)) <= 0.0) {
    throw ConfigError("trigger weight must be positive definite");
  }
  if (k.cols() != n || k.rows() < 1 || !all_finite(k)) {
    throw ConfigError("gain must be finite with n columns");
  }
  if (stride < 1 || s_cap < stride) {
    throw ConfigError("need s_cap >= stride >= 1");
  }
  if (!(gamma_lo > 0.0) || !(gamma_hi > gamma_lo) || gamma_points < 2) {
    throw ConfigError("gamma grid must satisfy 0 < lo < hi with >= 2 points");
  }
  if (!(psd_tol >= 0.0) || !std::isfinite(psd_tol)) {
    throw ConfigError("psd_tol must be finite and nonnegative");
  }
}

Mat lifted_gain(const Mat& k, int s) {
  if (s < 1) throw ConfigError("lifted gain needs s >= 1");
  Mat out(s * k.rows(), k.cols());
  for (int i = 0; i < s; ++i) {
    out.middleRows(i * k.rows(), k.rows()) = k;
  }
  return out;
}

Mat held_transition(const LtiModel& model, const Mat& k, int s) {
  if (s < 1) throw ConfigError("held transition needs s >= 1");
  if (k.rows() != model.m() || k.cols() != model.n()) {
    throw DimensionMismatch("gain shape does not match the model");
  }
  Mat a_pow = Mat::Identity(model.n(), model.n());
  for (int i = 0; i < s; ++i) a_pow = model.a * a_pow;
  return a_pow + input_power_stack(model.a, model.b, s) * lifted_gain(k, s);
}

double wait_value_model(const LtiModel& model, const StsParams& params,
                        const Vec& x_k, int s) {
  params.validate(model.n());
  if (x_k.size() != model.n()) {
    throw DimensionMismatch("state size does not match the model");
  }
  const Vec xp = held_transition(model, params.k, s) * x_k;
  const Vec e = xp - x_k;
  return params.sigma1 * xp.dot(params.omega * xp) +
         params.sigma2 * x_k.dot(params.omega * x_k) -
         e.dot(params.omega * e);
}

int next_interval_model(const LtiModel& model, const StsParams& params,
                        const Vec& x_k) {
  params.validate(model.n());
  if (x_k.size() != model.n()) {
    throw DimensionMismatch("state size does not match the model");
  }
  const int grid_max = (params.s_cap / params.stride) * params.stride;
  if (x_k.isZero(0.0)) return grid_max;
  int best = params.stride;
  for (int s = params.stride; s <= params.s_cap; s += params.stride) {
    if (wait_value_model(model, params, x_k, s) >= 0.0) {
      best = s;
    } else {
      break;
    }
  }
  return best;
}

LiftedCheck prepare_lifted_check(const LiftedDataRep& lifted) {
  const int n = lifted.rep.n;
  const int zdim = lifted.rep.zdim;
  const int dim = zdim + n;
  if (lifted.rep.theta.rows() != dim || lifted.rep.theta.cols() != dim) {
    throw DimensionMismatch("lifted record form has inconsistent dimensions");
  }
  const SymEig eig = sym_eig(SymMat(symmetrize(lifted.rep.theta)));
  const double big = eig.values.cwiseAbs().maxCoeff();
  const double small = eig.values.cwiseAbs().minCoeff();
  if (!(small > 0.0) || big / small > 1e12) {
    std::ostringstream msg;
    msg << "lifted record form at s = " << lifted.s
        << " is numerically singular (condition "
        << (small > 0.0 ? big / small : std::numeric_limits<double>::infinity())
        << ")";
    throw SingularTheta(msg.str());
  }
  int positives = 0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > 0.0) ++positives;
  }

  // Symmetric inverse through the eigendecomposition, then dualize:
  // [[Qc, Sc], [Sc', Rc]]^-1 =: [[Qt, St], [St', Rt]] maps to
  // [[-Rt, St'], [St, -Qt]].
  const Mat inv = eig.vectors *
                  eig.values.cwiseInverse().asDiagonal() *
                  eig.vectors.transpose();
  const Mat q_t = inv.topLeftCorner(zdim, zdim);
  const Mat s_t = inv.topRightCorner(zdim, n);
  const Mat r_t = inv.bottomRightCorner(n, n);

  LiftedCheck check;
  check.s = lifted.s;
  check.n = n;
  check.zdim = zdim;
  check.theta_tilde = symmetrize(sym_2x2(-r_t, s_t.transpose(), -q_t));
  const int n_w_s = static_cast<int>(lifted.b_w_s.cols());
  check.inertia_ok = (positives == n_w_s);
  if (!check.inertia_ok) {
    std::ostringstream msg;
    msg << "lifted record form at s = " << lifted.s << " has " << positives
        << " positive eigenvalues, expected " << n_w_s
        << "; the disturbance bound cannot be tight enough to certify waits";
    check.note = msg.str();
  }
  return check;
}

bool certify_wait_data(const LiftedCheck& check, const StsParams& params,
                       const Vec& x_k, double gamma) {
  params.validate(check.n);
  if (x_k.size() != check.n) {
    throw DimensionMismatch("state size does not match the prepared record");
  }
  if (!check.inertia_ok) {
    throw InertiaMismatch(check.note.empty()
                              ? "lifted record form has wrong inertia"
                              : check.note);
  }
  if (!(gamma > 0.0)) {
    throw ConfigError("wait certificate multiplier must be positive");
  }
  const Mat q = trigger_form(params, x_k);
  const Mat g = plant_set_form(check, params, x_k);
  return psd_with_slack(q, g, gamma, params.psd_tol).ok;
}

WaitCertificate search_gamma(const LiftedCheck& check, const StsParams& params,
                             const Vec& x_k) {
  params.validate(check.n);
  if (x_k.size() != check.n) {
    throw DimensionMismatch("state size does not match the prepared record");
  }
  if (!check.inertia_ok) {
    throw InertiaMismatch(check.note.empty()
                              ? "lifted record form has wrong inertia"
                              : check.note);
  }
  const Mat q = trigger_form(params, x_k);
  const Mat g = plant_set_form(check, params, x_k);

  const double log_lo = std::log(params.gamma_lo);
  const double log_hi = std::log(params.gamma_hi);
  auto slack = [&](double log_gamma) {
    return psd_with_slack(q, g, std::exp(log_gamma), params.psd_tol).lambda;
  };

  // Log-grid sweep. The slack is concave in gamma, so the grid maximum
  // brackets the true maximizer between its neighbors.
  int best_idx = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  const int pts = params.gamma_points;
  for (int i = 0; i < pts; ++i) {
    const double lg = log_lo + (log_hi - log_lo) * i / (pts - 1);
    const double v = slack(lg);
    if (v > best_val) {
      best_val = v;
      best_idx = i;
    }
  }
  double lo = log_lo + (log_hi - log_lo) * std::max(0, best_idx - 1) / (pts - 1);
  double hi =
      log_lo + (log_hi - log_lo) * std::min(pts - 1, best_idx + 1) / (pts - 1);

  // Golden-section refinement of the concave slack on the bracket.
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - golden * (hi - lo);
  double x2 = lo + golden * (hi - lo);
  double f1 = slack(x1);
  double f2 = slack(x2);
  for (int iter = 0; iter < 80 && hi - lo > 1e-4; ++iter) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = slack(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = slack(x2);
    }
  }
  double log_best = 0.5 * (lo + hi);
  if (slack(log_best) < best_val) {
    log_best = log_lo + (log_hi - log_lo) * best_idx / (pts - 1);
  }

  WaitCertificate cert;
  cert.gamma = std::exp(log_best);
  const PsdOutcome out = psd_with_slack(q, g, cert.gamma, params.psd_tol);
  cert.lambda_min = out.lambda;
  cert.certified = out.ok;
  return cert;
}

std::uint64_t data_digest(const ExperimentData& data) {
  std::uint64_t h = 1469598103934665603ull;
  const std::int64_t dims[4] = {data.n(), data.m(), data.n_w(), data.rho()};
  fnv_bytes(h, dims, sizeof(dims));
  fnv_mat(h, data.states());
  fnv_mat(h, data.inputs());
  fnv_mat(h, data.b_w());
  return h;
}

StsCache prepare_sts(const ExperimentData& data, const NoiseBound& base,
                     double wbar, const StsParams& params) {
  params.validate(data.n());
  if (params.k.rows() != data.m()) {
    throw DimensionMismatch("gain rows do not match the record's input size");
  }
  StsCache cache;
  cache.stride = params.stride;
  cache.s_cap = params.s_cap;
  cache.wbar = wbar;
  cache.digest = data_digest(data);
  for (int s = params.stride; s <= params.s_cap; s += params.stride) {
    const NoiseBound bound_s = lifted_noise_bound(wbar, data, base, s);
    const LiftedDataRep lifted = lift_data(data, s, bound_s);
    cache.entries.push_back(prepare_lifted_check(lifted));
  }
  return cache;
}

int next_interval_data(const StsCache& cache, const StsParams& params,
                       const Vec& x_k, std::vector<std::string>* warnings) {
  int best = cache.stride;
  for (const LiftedCheck& check : cache.entries) {
    if (!check.inertia_ok) {
      if (warnings != nullptr) warnings->push_back(check.note);
      break;
    }
    const WaitCertificate cert = search_gamma(check, params, x_k);
    if (!cert.certified) break;
    best = check.s;
  }
  return best;
}

nlohmann::json cache_to_json(const StsCache& cache) {
  nlohmann::json j;
  j["kind"] = "wait_certificate_cache";
  j["stride"] = cache.stride;
  j["s_cap"] = cache.s_cap;
  j["wbar"] = cache.wbar;
  std::ostringstream dig;
  dig << std::hex << cache.digest;
  j["digest"] = dig.str();
  nlohmann::json entries = nlohmann::json::array();
  for (const LiftedCheck& check : cache.entries) {
    nlohmann::json e;
    e["s"] = check.s;
    e["n"] = check.n;
    e["zdim"] = check.zdim;
    e["inertia_ok"] = check.inertia_ok;
    e["note"] = check.note;
    e["theta_tilde"] = mat_to_json(check.theta_tilde);
    entries.push_back(std::move(e));
  }
  j["entries"] = std::move(entries);
  return j;
}

StsCache cache_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "wait_certificate_cache") {
      throw SchemaError("not a wait-certificate cache");
    }
    StsCache cache;
    cache.stride = j.at("stride").get<int>();
    cache.s_cap = j.at("s_cap").get<int>();
    cache.wbar = j.at("wbar").get<double>();
    cache.digest = std::stoull(j.at("digest").get<std::string>(), nullptr, 16);
    for (const nlohmann::json& e : j.at("entries")) {
      LiftedCheck check;
      check.s = e.at("s").get<int>();
      check.n = e.at("n").get<int>();
      check.zdim = e.at("zdim").get<int>();
      check.inertia_ok = e.at("inertia_ok").get<bool>();
      check.note = e.at("note").get<std::string>();
      const int dim = check.n + check.zdim;
      check.theta_tilde = json_to_mat(e.at("theta_tilde"), dim, dim);
      cache.entries.push_back(std::move(check));
    }
    return cache;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("wait-certificate cache: ") + ex.what());
  }
}

}  // namespace sts
}  // namespace tct
