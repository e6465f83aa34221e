#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tct/sysdata.hpp"

namespace tct {
namespace sts {

// Self-triggered transmission: at each transmission instant t_k the sender
// computes, from x(t_k) alone, how many steps s it may stay silent while the
// waiting inequality
//   sigma1 * x(t_k+s)' W x(t_k+s) + sigma2 * x(t_k)' W x(t_k) - e' W e >= 0,
//   e = x(t_k+s) - x(t_k),
// remains certifiable, where x(t_k+s) is the held-input prediction
// (A^s + Bs Ks) x(t_k). The model path evaluates the inequality exactly; the
// data path certifies it over every plant consistent with a noisy record,
// via an S-procedure in a single scalar multiplier gamma > 0.

struct StsParams {
  double sigma1 = 0.5;  // weight on the predicted state
  double sigma2 = 0.5;  // weight on the held state
  Mat omega;            // n x n symmetric positive definite trigger weight
  Mat k;                // m x n feedback gain applied to the held state
  int s_cap = 50;       // largest wait ever returned
  int stride = 1;       // wait candidates are multiples of stride
  // gamma search for the data-driven certificate: log grid on
  // [gamma_lo, gamma_hi] with gamma_points samples, then local refinement.
  double gamma_lo = 1e-6;
  double gamma_hi = 1e6;
  int gamma_points = 121;
  // Slack for the semidefinite test, scaled by the matrix magnitudes.
  double psd_tol = 1e-9;

  // Throws ConfigError unless sigma1, sigma2 >= 0, omega is n x n symmetric
  // positive definite, k has n columns, s_cap >= stride >= 1, and the gamma
  // grid is ordered with at least two points.
  void validate(int n) const;
};

// Gain applied to the stacked prediction inputs: s vertical copies of k,
// (s*m) x n, so that input_power_stack(a, b, s) * lifted_gain(k, s) equals
// sum_{i<s} a^i b k.
Mat lifted_gain(const Mat& k, int s);

// Held-input s-step transition A^s + input_power_stack(a,b,s) lifted_gain(k,s).
Mat held_transition(const LtiModel& model, const Mat& k, int s);

// Value of the waiting inequality at the exact s-step prediction. Zero state
// gives zero; nonnegative value means the wait is admissible.
double wait_value_model(const LtiModel& model, const StsParams& params,
                        const Vec& x_k, int s);

// Largest admissible wait on the grid {stride, 2*stride, ...} <= s_cap under
// the contiguous-run rule: scan ascending, stop at the first violation, return
// the last admissible candidate — never less than stride, never more than
// s_cap. The zero state returns the grid maximum.
int next_interval_model(const LtiModel& model, const StsParams& params,
                        const Vec& x_k);

// --- data-driven certificate ------------------------------------------------

// Prepared per-wait certificate data: the dualized inverse of the lifted
// record's quadratic form, arranged so the admissibility test for state x is
//   Qx - gamma * Gx >= 0 (PSD), with
//   Qx = stack(I, x') * [[ (sigma1-1) W, W ], [ W, (sigma2-1) W ]] * stack',
//   Gx = stack(I, [x' (Ks x)']) * theta_tilde * stack'.
struct LiftedCheck {
  int s = 1;
  int n = 0;
  int zdim = 0;        // n + s*m
  Mat theta_tilde;     // (n + zdim) square, symmetric
  bool inertia_ok = false;
  std::string note;    // diagnostic when inertia_ok is false
};

// Inverts the lifted record's quadratic form and dualizes it. Throws
// SingularTheta when the form is numerically singular (condition number above
// 1e12). A form whose positive-eigenvalue count differs from the lifted
// disturbance dimension cannot certify anything sound; that case is reported
// through inertia_ok / note rather than guessed around, and certify_wait_data
// on such an entry throws InertiaMismatch.
LiftedCheck prepare_lifted_check(const LiftedDataRep& lifted);

// True when the prepared entry certifies the wait for this state at this
// multiplier. gamma must be positive. Throws InertiaMismatch when the entry's
// inertia check failed.
bool certify_wait_data(const LiftedCheck& check, const StsParams& params,
                       const Vec& x_k, double gamma);

// Result of searching the multiplier: the best slack found and where.
struct WaitCertificate {
  bool certified = false;
  double gamma = 0.0;
  double lambda_min = 0.0;  // smallest eigenvalue of Qx - gamma Gx at gamma
};

// Maximizes the smallest eigenvalue of Qx - gamma Gx over gamma > 0 (the map
// is concave in gamma): log-grid sweep plus golden-section refinement around
// the best sample. certified mirrors certify_wait_data at the returned gamma.
WaitCertificate search_gamma(const LiftedCheck& check, const StsParams& params,
                             const Vec& x_k);

// Prepared certificates for the whole wait grid, reusable across states and
// serializable so repeated runs skip the lifting work. digest identifies the
// generating record; wbar is the per-step disturbance level the bounds were
// built from.
struct StsCache {
  std::vector<LiftedCheck> entries;  // ascending s = stride, 2*stride, ...
  int stride = 1;
  int s_cap = 0;
  double wbar = 0.0;
  std::uint64_t digest = 0;
};

// FNV-1a digest of the record's regression matrices and dimensions; keys the
// cache to the data it was prepared from.
std::uint64_t data_digest(const ExperimentData& data);

// Lifts the record to every grid wait, builds sound lifted noise bounds from
// the per-step level wbar and the base bound, and prepares each certificate.
// Requires tail >= s - 1 for the largest grid wait (InsufficientTail
// otherwise). Entries whose inertia check fails are kept, flagged.
StsCache prepare_sts(const ExperimentData& data, const NoiseBound& base,
                     double wbar, const StsParams& params);

// Largest certified wait on the cache grid under the same contiguous-run rule
// as next_interval_model; a leading entry that cannot be certified (including
// a failed inertia check) ends the run and the floor stride is returned.
// Inertia failures append to warnings when given.
int next_interval_data(const StsCache& cache, const StsParams& params,
                       const Vec& x_k,
                       std::vector<std::string>* warnings = nullptr);

// Lossless JSON round trip for a prepared cache.
nlohmann::json cache_to_json(const StsCache& cache);
StsCache cache_from_json(const nlohmann::json& j);

}  // namespace sts
}  // namespace tct
