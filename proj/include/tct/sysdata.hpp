#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "tct/matrixcore.hpp"

namespace tct {

// Discrete-time linear model x(t+1) = A x(t) + B u(t).
struct LtiModel {
  Mat a;  // n x n
  Mat b;  // n x m
  LtiModel(Mat a_in, Mat b_in);
  int n() const { return static_cast<int>(a.rows()); }
  int m() const { return static_cast<int>(b.cols()); }
};

// Energy-type bound on the unknown disturbance record W (n_w x rho):
//   [W^T; I]^T [[q_d, s_d], [s_d^T, r_d]] [W^T; I]  is PSD
// for every admissible W. q_d must be negative definite.
class NoiseBound {
 public:
  NoiseBound(Mat q_d, Mat s_d, Mat r_d);
  const Mat& q_d() const { return q_d_; }
  const Mat& s_d() const { return s_d_; }
  const Mat& r_d() const { return r_d_; }
  int rho() const { return static_cast<int>(q_d_.rows()); }
  int n_w() const { return static_cast<int>(r_d_.rows()); }

 private:
  Mat q_d_, s_d_, r_d_;
};

// Bound admitting every disturbance record whose column 2-norms stay within
// wbar * sqrt(n_w) in aggregate: (-I_rho, 0, wbar^2 * rho * I_{n_w}).
// Columns drawn entrywise from [-wbar, wbar] satisfy it with overwhelming
// probability for moderate rho; a 2-norm-per-column bound of wbar satisfies
// it always.
NoiseBound box_noise_bound(double wbar, int rho, int n_w);

// If the bound is structurally (-I, 0, c*I), returns c (the r_d level);
// otherwise nullopt. Used for compact serialization.
std::optional<double> box_bound_level(const NoiseBound& bound);

// One input-state experiment record. Stores the full state trajectory
// x(0..rho+tail) and input record u(0..rho+tail-1); the first rho columns
// form the regression matrices and the remainder is kept for horizon
// lifting. The disturbance record is withheld from the identification
// surface by construction; generators may retain it for validation only.
class ExperimentData {
 public:
  ExperimentData(Mat states, Mat inputs, int rho, Mat b_w,
                 std::optional<Mat> retained_noise = std::nullopt);

  Mat x() const { return states_.leftCols(rho_); }
  Mat x_plus() const { return states_.middleCols(1, rho_); }
  Mat u() const { return inputs_.leftCols(rho_); }
  const Mat& states() const { return states_; }
  const Mat& inputs() const { return inputs_; }
  const Mat& b_w() const { return b_w_; }
  int n() const { return static_cast<int>(states_.rows()); }
  int m() const { return static_cast<int>(inputs_.rows()); }
  int n_w() const { return static_cast<int>(b_w_.cols()); }
  int rho() const { return rho_; }
  int tail() const { return static_cast<int>(inputs_.cols()) - rho_; }

  // Smallest singular value of the stacked regressor [X; U]; zero signals
  // data too poor to pin down the model.
  double richness() const { return richness_; }

  // Present only on generated data; for validation harnesses, never part of
  // the identification interface.
  const std::optional<Mat>& retained_noise() const { return noise_; }

  // Generation seed when known; recorded into exported descriptors.
  std::optional<uint64_t> seed;

 private:
  Mat states_, inputs_, b_w_;
  int rho_ = 0;
  double richness_ = 0.0;
  std::optional<Mat> noise_;
};

// Simulate x(t+1) = A x(t) + B u(t) + b_w w(t) from x(0) = 0 for
// rho + tail steps, drawing u entrywise uniform on [input_lo, input_hi] and
// w entrywise uniform on [-wbar, wbar] from the seeded generator (per step:
// input entries first, then disturbance entries). The realized disturbance
// is retained on the result for validation only.
ExperimentData generate_experiment(const LtiModel& model, const Mat& b_w,
                                   int rho, double input_lo, double input_hi,
                                   double wbar, uint64_t seed, int tail = 0);

// Quadratic outer representation of the set of (A, B) pairs consistent with
// the data under the noise bound: a pair belongs iff
//   [Z; I]^T theta [Z; I]  is PSD,  Z = [A B]^T.
// zdim is the row count of Z (n + m for base data, n + s*m when lifted).
struct DataRep {
  Mat theta;  // (zdim + n) square
  Mat q_c;    // zdim square   (top-left)
  Mat s_c;    // zdim x n      (top-right)
  Mat r_c;    // n square      (bottom-right)
  int zdim = 0;
  int n = 0;
};

DataRep assemble_theta(const ExperimentData& data, const NoiseBound& bound);

// Membership form for a candidate ab = [A B] (n x zdim): the symmetric n x n
// value of the representation's quadratic form at that candidate.
Mat membership_form(const DataRep& rep, const Mat& ab);
bool contains(const DataRep& rep, const Mat& ab, double tol = 1e-9);

// Matrix-ellipsoid enclosure of the consistent set: every member [A B]
// satisfies ||[A B] - center||_2 <= radius. a_norm_bound additionally bounds
// ||A||_2 over the set. Requires q_c negative definite.
struct SetBounds {
  Mat center;  // n x zdim
  double radius = 0.0;
  double a_norm_bound = 0.0;
};
SetBounds consistent_set_bounds(const DataRep& rep);

// [A^{s-1} B, A^{s-2} B, ..., B], the input convolution stack over an
// s-step horizon (n x s*m).
Mat input_power_stack(const Mat& a, const Mat& b, int s);

// s-step-ahead regression data: x(T+s) = A^s x(T) + Bs us(T) + (lifted
// disturbance), with Bs = input_power_stack and us(T) the stacked inputs
// u(T), ..., u(T+s-1). The lifted disturbance enters through b_w_s (= b_w
// when s = 1, identity when s > 1).
struct LiftedDataRep {
  int s = 1;
  Mat x_plus_s;  // n x rho
  Mat u_s;       // (s*m) x rho
  Mat b_w_s;     // n x n_w_s
  DataRep rep;
  NoiseBound bound;
};

LiftedDataRep lift_data(const ExperimentData& data, int s,
                        const NoiseBound& lifted_bound);

// Sound bound for the s-step lifted disturbance from a per-step bound
// ||w(T)||_2 <= wbar: for s = 1 the box form above; for s > 1
//   (-I_rho, 0, rho * (sum_{i<s} abar^i * ||b_w||_2)^2 * wbar^2 * I_n)
// where abar bounds ||A||_2 over the consistent set of the base data.
// Conservative but provable by norm propagation.
NoiseBound lifted_noise_bound(double wbar, const ExperimentData& data,
                              const NoiseBound& bound, int s);

// --- persistence -----------------------------------------------------------
// CSV schema: header "t,x1..xn,u1..um"; one row per time index with t
// strictly consecutive from 0; the input cells on the final row are ignored.
// Values are written with 17 significant digits so doubles round-trip
// bit-exactly.

// rho = -1 uses every row (no tail). b_w defaults to the identity.
ExperimentData ingest_csv(const std::string& path, long rho = -1,
                          std::optional<Mat> b_w = std::nullopt);
void export_csv(const ExperimentData& data, const std::string& path);

// JSON descriptor carrying dimensions, b_w, the noise bound, and the seed.
nlohmann::json dataset_descriptor(const ExperimentData& data,
                                  const NoiseBound& bound);

// CSV plus sidecar descriptor at csv_path + ".json".
void write_dataset(const ExperimentData& data, const NoiseBound& bound,
                   const std::string& csv_path);
std::pair<ExperimentData, NoiseBound> read_dataset(const std::string& csv_path);

}  // namespace tct
