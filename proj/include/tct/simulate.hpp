#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tct/ets_design.hpp"
#include "tct/sts.hpp"
#include "tct/sysdata.hpp"

namespace tct {
namespace simulate {

// Closed-loop execution of x(t+1) = A x(t) + B K x(t_k) under event-triggered,
// self-triggered, or periodic transmission, with runtime probes that check the
// guarantees a feasibility certificate promises: the trigger's internal
// variable stays nonnegative, the loop functional vanishes at segment
// boundaries, and the certified energy decreases across sampling instants.

// Per-sample trigger diagnostic (event-triggered runs): the trigger value and
// threshold condition evaluated before the transmission decision.
struct SampleDiag {
  int t = 0;
  double rho = 0.0;        // trigger value with the in-force held state
  double condition = 0.0;  // eta + theta * rho (what the decision tested)
  bool transmitted = false;
};

struct TriggerTrace {
  int horizon = 0;
  Mat states;  // n x (horizon + 1)
  Mat inputs;  // m x horizon, constant between transmissions (ZOH)
  Mat held;    // n x horizon, the held state that produced inputs.col(t)
  std::vector<int> transmissions;  // ascending; always starts at 0
  std::vector<int> samples;        // sampling instants (multiples of the step)
  Vec eta;  // horizon + 1; held between samples; zero for self-triggered runs
  std::vector<SampleDiag> diags;  // one per sampling instant (event-triggered)
};

// Optional additive disturbance hook: the return value (length n) is added to
// x(t+1). Disabled when empty; acceptance runs keep it off.
using NoiseHook = std::function<Vec(int)>;

// Event-triggered closed loop at step h = params.runtime_interval(): samples
// every h steps, transmits at the first sampled instant after a transmission
// whose condition eta + theta * rho goes negative (periodic_mode fires on a
// negative trigger value alone, the infinite-threshold limit), applies
// u = K x(t_k) held between transmissions. The internal variable is attached
// to sampling instants and held between them.
TriggerTrace run_ets(const LtiModel& model, const EtsDesign& design,
                     const EtsParams& params, const Vec& x0, int horizon,
                     const NoiseHook& noise = {});

// Self-triggered closed loop: at each transmission instant the next interval
// comes from the wait-certificate scan — data-driven over the cache when one
// is given, exact model evaluation otherwise. Between transmissions the
// trigger reads nothing; the plant still evolves with the held input.
TriggerTrace run_sts(const LtiModel& model, const sts::StsParams& params,
                     const Vec& x0, int horizon,
                     const sts::StsCache* cache = nullptr,
                     const NoiseHook& noise = {});

// --- probes -----------------------------------------------------------------

struct EtaProbe {
  bool pass = true;
  double eta_min = 0.0;
  int first_violation = -1;  // sampling instant, -1 when none
};

// Nonnegativity of the trigger's internal variable at every sampling instant
// (tolerance 1e-12; guaranteed for valid parameters and eta0 >= 0).
EtaProbe probe_eta_nonneg(const TriggerTrace& trace);

// Certificate pieces that define the loop functional, in plant coordinates.
// For a data-driven design the stored witness certifies the transformed
// system, so every piece is congruence-transformed by the inverse of the
// coordinate-change variable before use.
struct LoopWitness {
  Mat p;   // n x n
  Mat r1;  // n x n
  Mat r2;  // n x n
  Mat s;   // 4n x 4n
};

// Extracts (and transforms, for data-driven origins) the loop-functional
// pieces from a design's witness. Throws MissingVariable when the witness
// lacks a piece, SingularG when the coordinate change cannot be inverted.
LoopWitness loop_witness(const EtsDesign& design);

struct ProbeReport {
  double eta_min = 0.0;
  // Loop-functional value at each sampling instant (taken as the right
  // endpoint of its segment, then the left endpoint of the next); all should
  // vanish to 1e-10.
  std::vector<double> boundary_values;
  // Certified decrease quantity V_a + (h-1) eta at sampling instants, and the
  // companion V_a + h eta recorded for context.
  std::vector<double> decrease_seq;
  std::vector<double> decrease_seq_alt;
  std::vector<std::string> violations;
  bool pass = true;
};

// Evaluates the loop functional piecewise along an event-triggered trace:
// boundary values at sampling instants must vanish, and the decrease quantity
// must fall strictly across consecutive sampling instants while the state is
// away from zero (norm above 1e-7).
ProbeReport probe_loop_functional(const EtsDesign& design,
                                  const EtsParams& params,
                                  const TriggerTrace& trace);

// --- summation-inequality property harness ----------------------------------

// Slack (right side minus left side) of the free-matrix summation inequality
//   -sum y(i)' R y(i) <= (cols-1) theta' N blkdiag(R,3R)^-1 N' theta
//                        + 2 theta' N Pi(xs)
// over the sequence xs (n x (cols)), y(i) = xs.col(i+1) - xs.col(i), with
// Pi = [last - first; last + first - 2 * mean]. Nonnegative slack means the
// inequality holds.
double summation_margin(const Mat& r, const Mat& n_mat, const Vec& theta,
                        const Mat& xs);

struct SummationStats {
  int trials = 0;
  int violations = 0;      // slack below -1e-9
  double worst_slack = 0;  // most negative slack observed
  bool pass = false;
};

// Randomized property run: dimensions up to 4, sequence lengths up to 12,
// random positive definite R, free N, and multiplier theta.
SummationStats check_summation_property(std::uint64_t seed, int trials);

// --- persistence ------------------------------------------------------------

// Trace CSV: header "t,x1..xn,u1..um,transmitted,sampled,eta"; one row per
// time index; input cells on the final row repeat the last applied input.
void write_trace_csv(const TriggerTrace& trace, const std::string& path);

nlohmann::json probe_report_json(const ProbeReport& report);

}  // namespace simulate
}  // namespace tct
