#include "tct/simulate.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "tct/errors.hpp"
#include "tct/matrixcore.hpp"
#include "tct/rng.hpp"

namespace tct {
namespace simulate {

namespace {

double trigger_value(double sig1, double sig2, const Mat& omega, const Vec& x,
                     const Vec& held) {
  const Vec e = x - held;
  return sig1 * x.dot(omega * x) + sig2 * held.dot(omega * held) -
         e.dot(omega * e);
}

void check_loop_shapes(const LtiModel& model, const Mat& k, const Mat& omega,
                       const Vec& x0, int horizon) {
  if (k.rows() != model.m() || k.cols() != model.n()) {
    throw DimensionMismatch("gain shape does not match the model");
  }
  if (omega.rows() != model.n() || omega.cols() != model.n()) {
    throw DimensionMismatch("trigger weight shape does not match the model");
  }
  if (x0.size() != model.n()) {
    throw DimensionMismatch("initial state size does not match the model");
  }
  if (horizon < 1) {
    throw ConfigError("horizon must be at least 1");
  }
}

Vec plant_step(const LtiModel& model, const Vec& x, const Vec& u,
               const NoiseHook& noise, int t) {
  Vec next = model.a * x + model.b * u;
  if (noise) {
    const Vec w = noise(t);
    if (w.size() != model.n()) {
      throw DimensionMismatch("disturbance hook returned the wrong size");
    }
    next += w;
  }
  return next;
}

// Loop-functional value at time t on the segment [a, b] of a recorded state
// trajectory. Evaluated literally from the printed pieces; the prefactor-zero
// terms at the endpoints short-circuit only where the trace cannot supply the
// state one step past the run's end.
double vl_value(const LoopWitness& wit, const Mat& states, int a, int b,
                int t) {
  const int n = static_cast<int>(states.rows());
  const int last = static_cast<int>(states.cols()) - 1;
  auto y = [&](int i) -> Vec { return states.col(i + 1) - states.col(i); };

  // First piece: 2 phi1' S phi2.
  Vec phi0(2 * n);
  phi0 << states.col(a), states.col(b);
  Vec sum_a_t = Vec::Zero(n);
  for (int i = a; i <= t; ++i) sum_a_t += states.col(i);
  Vec sum_t_b = Vec::Zero(n);
  for (int i = t; i <= b; ++i) sum_t_b += states.col(i);
  Vec phi1(4 * n), phi2(4 * n);
  phi1 << (t - a) * phi0, states.col(t) - states.col(a),
      sum_a_t - states.col(a);
  phi2 << (b - t) * phi0, states.col(b) - states.col(t),
      sum_t_b - states.col(b);
  const double vl1 = 2.0 * phi1.dot(wit.s * phi2);

  // Second piece: (b - t) [ sum_{i=a}^{t} y'R1y - y(t)'R1y(t) ].
  double vl2 = 0.0;
  if (t < b) {
    double acc = 0.0;
    for (int i = a; i <= t; ++i) acc += y(i).dot(wit.r1 * y(i));
    acc -= y(t).dot(wit.r1 * y(t));
    vl2 = (b - t) * acc;
  }

  // Third piece: (t - a) [ sum_{i=t}^{b} y'R2y - y(t)'R2y(t) ].
  double vl3 = 0.0;
  if (t > a && b + 1 <= last) {
    double acc = 0.0;
    for (int i = t; i <= b; ++i) acc += y(i).dot(wit.r2 * y(i));
    acc -= y(t).dot(wit.r2 * y(t));
    vl3 = (t - a) * acc;
  }
  return vl1 + vl2 + vl3;
}

Mat witness_piece(const lmi::Assignment& witness, const std::string& name,
                  int rows, int cols) {
  const auto it = witness.find(name);
  if (it == witness.end()) {
    throw MissingVariable("witness lacks piece '" + name + "'");
  }
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw DimensionMismatch("witness piece '" + name +
                            "' has unexpected shape");
  }
  return it->second;
}

}  // namespace

TriggerTrace run_ets(const LtiModel& model, const EtsDesign& design,
                     const EtsParams& params, const Vec& x0, int horizon,
                     const NoiseHook& noise) {
  params.validate();
  check_loop_shapes(model, design.k, design.omega, x0, horizon);
  const int n = model.n();
  const int m = model.m();
  const int h = params.runtime_interval();
  const double sig1 = params.sig1();
  const double sig2 = params.sig2();

  TriggerTrace trace;
  trace.horizon = horizon;
  trace.states = Mat::Zero(n, horizon + 1);
  trace.inputs = Mat::Zero(m, horizon);
  trace.held = Mat::Zero(n, horizon);
  trace.eta = Vec::Zero(horizon + 1);
  trace.states.col(0) = x0;
  trace.transmissions.push_back(0);

  Vec held_state = x0;
  double eta_now = params.eta0;
  double eta_pending = eta_now;
  int since_transmission = 0;

  for (int t = 0; t <= horizon; ++t) {
    if (t % h == 0) {
      const Vec x = trace.states.col(t);
      const double rho_pre =
          trigger_value(sig1, sig2, design.omega, x, held_state);
      const double condition = eta_now + params.theta * rho_pre;
      const bool fire =
          since_transmission > 0 &&
          (params.periodic_mode ? rho_pre < 0.0 : condition < 0.0);
      if (fire) {
        held_state = x;
        trace.transmissions.push_back(t);
        since_transmission = 0;
      }
      trace.samples.push_back(t);
      trace.diags.push_back({t, rho_pre, condition, fire});
      const double rho_post =
          fire ? trigger_value(sig1, sig2, design.omega, x, x) : rho_pre;
      eta_pending = (1.0 - params.lambda) * eta_now + rho_post;
      ++since_transmission;
    }
    trace.eta(t) = eta_now;
    if (t == horizon) break;
    const Vec u = design.k * held_state;
    trace.held.col(t) = held_state;
    trace.inputs.col(t) = u;
    trace.states.col(t + 1) =
        plant_step(model, trace.states.col(t), u, noise, t);
    if ((t + 1) % h == 0) eta_now = eta_pending;
  }
  return trace;
}

TriggerTrace run_sts(const LtiModel& model, const sts::StsParams& params,
                     const Vec& x0, int horizon, const sts::StsCache* cache,
                     const NoiseHook& noise) {
  params.validate(model.n());
  check_loop_shapes(model, params.k, params.omega, x0, horizon);
  const int n = model.n();
  const int m = model.m();

  TriggerTrace trace;
  trace.horizon = horizon;
  trace.states = Mat::Zero(n, horizon + 1);
  trace.inputs = Mat::Zero(m, horizon);
  trace.held = Mat::Zero(n, horizon);
  trace.eta = Vec::Zero(horizon + 1);
  trace.states.col(0) = x0;
  trace.transmissions.push_back(0);
  for (int t = 0; t <= horizon; t += params.stride) trace.samples.push_back(t);

  Vec held_state = x0;
  int t = 0;
  while (t < horizon) {
    const int interval =
        cache != nullptr ? sts::next_interval_data(*cache, params, held_state)
                         : sts::next_interval_model(model, params, held_state);
    const int steps = std::min(interval, horizon - t);
    for (int i = 0; i < steps; ++i) {
      const Vec u = params.k * held_state;
      trace.held.col(t) = held_state;
      trace.inputs.col(t) = u;
      trace.states.col(t + 1) =
          plant_step(model, trace.states.col(t), u, noise, t);
      ++t;
    }
    if (steps == interval && t < horizon) {
      held_state = trace.states.col(t);
      trace.transmissions.push_back(t);
    }
  }
  return trace;
}

EtaProbe probe_eta_nonneg(const TriggerTrace& trace) {
  EtaProbe probe;
  probe.eta_min = std::numeric_limits<double>::infinity();
  for (const int t : trace.samples) {
    const double value = trace.eta(t);
    if (value < probe.eta_min) probe.eta_min = value;
    if (value < -1e-12 && probe.first_violation < 0) {
      probe.first_violation = t;
      probe.pass = false;
    }
  }
  if (trace.samples.empty()) probe.eta_min = 0.0;
  return probe;
}

LoopWitness loop_witness(const EtsDesign& design) {
  int n = static_cast<int>(design.omega.rows());
  LoopWitness wit;
  wit.p = witness_piece(design.witness, "P", n, n);
  wit.r1 = witness_piece(design.witness, "R1", n, n);
  wit.r2 = witness_piece(design.witness, "R2", n, n);
  wit.s = witness_piece(design.witness, "S", 4 * n, 4 * n);
  if (design.origin == DesignOrigin::DataDriven) {
    const Mat g = witness_piece(design.witness, "G", n, n);
    const Eigen::JacobiSVD<Mat> svd(g, Eigen::ComputeThinU |
                                           Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin > 1e10) {
      throw SingularG("coordinate-change variable is numerically singular");
    }
    const Mat g_inv = g.inverse();
    auto congruence = [&](const Mat& mat) -> Mat {
      const Mat out = g_inv.transpose() * mat * g_inv;
      return 0.5 * (out + out.transpose());
    };
    wit.p = congruence(wit.p);
    wit.r1 = congruence(wit.r1);
    wit.r2 = congruence(wit.r2);
    Mat blk = Mat::Zero(4 * n, 4 * n);
    for (int i = 0; i < 4; ++i) blk.block(i * n, i * n, n, n) = g_inv;
    wit.s = blk.transpose() * wit.s * blk;
  }
  return wit;
}

ProbeReport probe_loop_functional(const EtsDesign& design,
                                  const EtsParams& params,
                                  const TriggerTrace& trace) {
  const LoopWitness wit = loop_witness(design);
  const int h = params.runtime_interval();
  ProbeReport report;

  const EtaProbe eta_probe = probe_eta_nonneg(trace);
  report.eta_min = eta_probe.eta_min;
  if (!eta_probe.pass) {
    std::ostringstream msg;
    msg << "internal variable negative at t = " << eta_probe.first_violation;
    report.violations.push_back(msg.str());
  }

  for (std::size_t i = 0; i + 1 < trace.samples.size(); ++i) {
    const int a = trace.samples[i];
    const int b = trace.samples[i + 1];
    for (const int t : {a, b}) {
      const double boundary = vl_value(wit, trace.states, a, b, t);
      report.boundary_values.push_back(boundary);
      if (std::abs(boundary) > 1e-10) {
        std::ostringstream msg;
        msg << "loop functional fails to vanish at t = " << t << " (value "
            << boundary << ")";
        report.violations.push_back(msg.str());
      }
    }
  }

  for (const int t : trace.samples) {
    const Vec x = trace.states.col(t);
    const double va = x.dot(wit.p * x);
    report.decrease_seq.push_back(va + (h - 1) * trace.eta(t));
    report.decrease_seq_alt.push_back(va + h * trace.eta(t));
  }
  for (std::size_t i = 0; i + 1 < trace.samples.size(); ++i) {
    const Vec x = trace.states.col(trace.samples[i]);
    if (x.norm() <= 1e-7) continue;
    if (report.decrease_seq[i + 1] >= report.decrease_seq[i]) {
      std::ostringstream msg;
      msg << "certified energy fails to decrease across t = "
          << trace.samples[i] << " -> " << trace.samples[i + 1];
      report.violations.push_back(msg.str());
    }
  }
  report.pass = report.violations.empty();
  return report;
}

double summation_margin(const Mat& r, const Mat& n_mat, const Vec& theta,
                        const Mat& xs) {
  const int n = static_cast<int>(r.rows());
  const int len = static_cast<int>(xs.cols()) - 1;
  if (len < 1) throw ConfigError("sequence needs at least two samples");
  if (r.cols() != n || xs.rows() != n) {
    throw DimensionMismatch("weight and sequence dimensions disagree");
  }
  if (n_mat.cols() != 2 * n || n_mat.rows() != theta.size()) {
    throw DimensionMismatch("free matrix must be (multiplier) x 2n");
  }

  double lhs_neg = 0.0;
  for (int i = 0; i < len; ++i) {
    const Vec y = xs.col(i + 1) - xs.col(i);
    lhs_neg += y.dot(r * y);
  }

  Mat r_block = Mat::Zero(2 * n, 2 * n);
  r_block.topLeftCorner(n, n) = r;
  r_block.bottomRightCorner(n, n) = 3.0 * r;
  const Vec nt_theta = n_mat.transpose() * theta;
  const double quad =
      len * nt_theta.dot(r_block.llt().solve(nt_theta));

  const Vec mean = xs.rowwise().mean();
  Vec pi(2 * n);
  pi << xs.col(len) - xs.col(0), xs.col(len) + xs.col(0) - 2.0 * mean;
  const double cross = 2.0 * theta.dot(n_mat * pi);

  return quad + cross + lhs_neg;
}

SummationStats check_summation_property(std::uint64_t seed, int trials) {
  if (trials < 1) throw ConfigError("need at least one trial");
  Rng rng(seed);
  SummationStats stats;
  stats.trials = trials;
  stats.worst_slack = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 4);
    const int q = 1 + static_cast<int>(rng.next_u64() % 4);
    const int len = 1 + static_cast<int>(rng.next_u64() % 12);

    Mat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    const Mat r =
        a * a.transpose() + (0.05 + rng.uniform01()) * Mat::Identity(n, n);

    Mat n_mat(q, 2 * n);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < 2 * n; ++j) n_mat(i, j) = rng.uniform(-2.0, 2.0);
    Vec theta(q);
    for (int i = 0; i < q; ++i) theta(i) = rng.uniform(-2.0, 2.0);
    Mat xs(n, len + 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= len; ++j) xs(i, j) = rng.uniform(-3.0, 3.0);

    const double slack = summation_margin(r, n_mat, theta, xs);
    if (slack < stats.worst_slack) stats.worst_slack = slack;
    if (slack < -1e-9) ++stats.violations;
  }
  stats.pass = stats.violations == 0;
  return stats;
}

void write_trace_csv(const TriggerTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  const int n = static_cast<int>(trace.states.rows());
  const int m = static_cast<int>(trace.inputs.rows());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  out << ",transmitted,sampled,eta\n";
  const std::unordered_set<int> tx(trace.transmissions.begin(),
                                   trace.transmissions.end());
  const std::unordered_set<int> sampled(trace.samples.begin(),
                                        trace.samples.end());
  out << std::setprecision(17);
  for (int t = 0; t <= trace.horizon; ++t) {
    out << t;
    for (int i = 0; i < n; ++i) out << "," << trace.states(i, t);
    const int t_u = std::min(t, trace.horizon - 1);
    for (int i = 0; i < m; ++i) out << "," << trace.inputs(i, t_u);
    out << "," << (tx.count(t) ? 1 : 0) << "," << (sampled.count(t) ? 1 : 0)
        << "," << trace.eta(t) << "\n";
  }
  if (!out) throw ParseError("failed while writing '" + path + "'");
}

nlohmann::json probe_report_json(const ProbeReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass;
  j["eta_min"] = report.eta_min;
  j["boundary_values"] = report.boundary_values;
  j["decrease"] = report.decrease_seq;
  j["decrease_companion"] = report.decrease_seq_alt;
  j["violations"] = report.violations;
  return j;
}

}  // namespace simulate
}  // namespace tct
