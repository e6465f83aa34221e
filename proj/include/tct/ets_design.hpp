#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tct/lmi.hpp"
#include "tct/matrixcore.hpp"
#include "tct/sysdata.hpp"

namespace tct {

// Parameters of the sampled-data transmission scheme and its certificates.
// h_low/h_high bracket the sampling interval the certificate must cover;
// h_runtime is the interval the closed loop actually runs at (0 = h_high).
// sigma1/sigma2/lambda/theta/eta0 shape the dynamic trigger; the trigger's
// internal variable stays nonnegative when 1 - lambda - 1/theta >= 0.
// descriptor_eps weights the one-step-ahead row in the relaxation used by
// the co-design builders. periodic_mode marks a transmit-every-sample
// configuration: the sigma weights are treated as zero and the runtime loop
// skips the trigger entirely.
struct EtsParams {
  int h_low = 1;
  int h_high = 1;
  int h_runtime = 0;  // 0: run at h_high
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double lambda = 0.2;
  double theta = 2.0;
  double eta0 = 0.0;
  double descriptor_eps = 2.0;
  bool periodic_mode = false;

  int runtime_interval() const { return h_runtime == 0 ? h_high : h_runtime; }
  double sig1() const { return periodic_mode ? 0.0 : sigma1; }
  double sig2() const { return periodic_mode ? 0.0 : sigma2; }
  void validate() const;  // throws ConfigError
};

enum class DesignOrigin { ModelBased, DataDriven };

// A finished design: feedback gain plus triggering matrix, with the solver
// witness it was recovered from.
struct EtsDesign {
  Mat k;      // m x n
  Mat omega;  // n x n, symmetric positive definite
  DesignOrigin origin = DesignOrigin::ModelBased;
  lmi::Assignment witness;
  double margin = 0.0;
};

// Stability certificate for a known model under a given gain at one
// sampling-interval vertex h: two strict matrix-negativity blocks over
// P, R1, R2, Omega (positive definite), S, N1, N2, F (free). A certificate
// for the whole interval [h_low, h_high] is the merge at both endpoints.
lmi::Problem build_stability_lmi(const LtiModel& model, const Mat& k,
                            const EtsParams& params, int h);

// Data-driven co-design at one vertex h from the consistency representation:
// variables eps (scalar > 0), P, R1, R2, Omega_z (positive definite),
// S, N1, N2 (free), G (n x n), K_c (m x n). Passing fixed_k substitutes
// K_c = fixed_k * G, evaluating a prescribed gain instead of designing one.
lmi::Problem build_data_codesign_lmi(const DataRep& rep, const EtsParams& params, int h,
                            const std::optional<Mat>& fixed_k = std::nullopt);

// Model-based co-design at one vertex h for a known model; same variables as
// the data-driven builder minus the multiplier eps.
lmi::Problem build_model_codesign_lmi(const LtiModel& model,
                                  const EtsParams& params, int h,
                                  const std::optional<Mat>& fixed_k =
                                      std::nullopt);

// Union of a single-vertex builder at both interval endpoints, sharing the
// decision variables. h_low == h_high collapses to one build.
lmi::Problem merge_at_vertices(const std::function<lmi::Problem(int)>& builder,
                               int h_low, int h_high);

struct IntervalSearchResult {
  int h_max = 0;  // largest feasible h_high (0 if none)
  std::vector<std::pair<int, lmi::FeasStatus>> table;  // every h scanned
  lmi::Feasibility best;  // solve result at h_max
};

// Ascending scan over h_high in [h_low, h_cap]: each candidate solves the
// vertex pair {h_low, candidate}. No monotonicity in h is assumed — the
// full table is recorded and the largest strictly feasible candidate wins.
// use_parallel distributes candidates across threads; results are identical
// to the serial scan. Throws NoFeasibleH when no candidate is feasible.
IntervalSearchResult max_interval_search(const std::function<lmi::Problem(int)>& builder,
                           int h_low, int h_cap,
                           const lmi::SolveOptions& opts = {},
                           bool use_parallel = false);

// Recover (K, Omega) from a witness. Witnesses holding G / K_c / Omega_z are
// inverted through G (K = K_c G^{-1}, Omega = G^{-T} Omega_z G^{-1}, with
// fixed_k taking precedence over K_c when given); witnesses holding Omega
// directly require fixed_k and pass both through. Throws SingularG when
// cond(G) > 1e10.
EtsDesign extract_design(const lmi::Assignment& witness, DesignOrigin origin,
                         const std::optional<Mat>& fixed_k = std::nullopt,
                         double margin = 0.0);

}  // namespace tct
