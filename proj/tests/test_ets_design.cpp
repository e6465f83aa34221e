#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <optional>

#include "oracles.hpp"
#include "tct/errors.hpp"
#include "tct/ets_design.hpp"
#include "tct/lmi.hpp"
#include "tct/matrixcore.hpp"
#include "tct/rng.hpp"
#include "tct/sysdata.hpp"

using tct::Mat;
using tct::Vec;

namespace {

tct::LtiModel friction_model(double t_sample) {
  const auto [a, b] = oracles::friction_plant_zoh(0.1, 0.1, t_sample);
  return tct::LtiModel(a, b);
}

Mat friction_gain() {
  Mat k(1, 2);
  k << -3.75, -11.5;
  return k;
}

tct::LtiModel scalar_model(double a, double b) {
  Mat am(1, 1), bm(1, 1);
  am << a;
  bm << b;
  return tct::LtiModel(am, bm);
}

tct::EtsParams quiet_params() {
  tct::EtsParams p;
  p.sigma1 = 0.0;
  p.sigma2 = 0.0;
  return p;
}

tct::lmi::SolveOptions fast_options() {
  tct::lmi::SolveOptions o;
  o.collect_certificate = false;
  return o;
}

tct::lmi::Problem merged_stability(const tct::LtiModel& model, const Mat& k,
                                  const tct::EtsParams& p, int h_low,
                                  int h_high) {
  return tct::merge_at_vertices(
      [&](int h) { return tct::build_stability_lmi(model, k, p, h); }, h_low,
      h_high);
}

tct::DataRep friction_data_rep(double wbar, uint64_t seed) {
  const tct::LtiModel model = friction_model(0.1);
  const Mat b_w = 0.01 * Mat::Identity(2, 2);
  const tct::ExperimentData data =
      tct::generate_experiment(model, b_w, 800, -1.0, 1.0, wbar, seed);
  const tct::NoiseBound bound = tct::box_noise_bound(wbar, 800, 2);
  return tct::assemble_theta(data, bound);
}

}  // namespace

TEST_CASE("parameter validation rejects broken configurations") {
  tct::EtsParams p;
  CHECK_NOTHROW(p.validate());

  tct::EtsParams bad = p;
  bad.h_low = 0;
  CHECK_THROWS_AS(bad.validate(), tct::ConfigError);

  bad = p;
  bad.h_high = 0;
  CHECK_THROWS_AS(bad.validate(), tct::ConfigError);

  bad = p;
  bad.h_low = 5;
  bad.h_high = 3;
  CHECK_THROWS_AS(bad.validate(), tct::ConfigError);

  // The trigger's internal variable stays nonnegative only when
  // 1 - lambda - 1/theta >= 0.
  bad = p;
  bad.lambda = 0.9;
  bad.theta = 2.0;
  CHECK_THROWS_AS(bad.validate(), tct::ConfigError);

  bad = p;
  bad.descriptor_eps = std::nan("");
  CHECK_THROWS_AS(bad.validate(), tct::ConfigError);

  // A negative relaxation weight is a legitimate configuration.
  tct::EtsParams negative = p;
  negative.descriptor_eps = -2.0;
  CHECK_NOTHROW(negative.validate());
}

TEST_CASE("sampling interval below one is rejected by the builders") {
  const tct::LtiModel model = scalar_model(0.5, 1.0);
  Mat k(1, 1);
  k << -0.4;
  CHECK_THROWS_AS(tct::build_stability_lmi(model, k, quiet_params(), 0),
                  tct::ConfigError);
  CHECK_THROWS_AS(tct::build_model_codesign_lmi(model, quiet_params(), 0),
                  tct::ConfigError);
}

TEST_CASE("scalar closed loop certificate matches direct stability analysis") {
  // a + b k = 0.1: Schur-stable, so a certificate at transmit-every-sample
  // settings must exist.
  const tct::LtiModel stable = scalar_model(0.5, 1.0);
  Mat k(1, 1);
  k << -0.4;
  const tct::lmi::Problem feas =
      merged_stability(stable, k, quiet_params(), 1, 1);
  const tct::lmi::Feasibility good = tct::lmi::solve_feasibility(feas);
  CHECK(good.status == tct::lmi::FeasStatus::StrictlyFeasible);
  CHECK(good.margin > 0.0);
  for (const auto& ev : good.recheck) CHECK(ev.satisfied);

  // a + b k = 1.7: diverges, so no certificate can exist at any interval.
  const tct::lmi::Problem infeas = merged_stability(
      scalar_model(1.5, 1.0), Mat::Constant(1, 1, 0.2), quiet_params(), 1, 1);
  const tct::lmi::Feasibility bad =
      tct::lmi::solve_feasibility(infeas, fast_options());
  CHECK(bad.status != tct::lmi::FeasStatus::StrictlyFeasible);
}

TEST_CASE("known-plant certificate covers the reference operating range") {
  // Fine discretization of the friction plant under the reference gain:
  // the maximal certified interval is expected a little above 170; probe
  // just inside and just outside that boundary instead of a full scan.
  const tct::LtiModel model = friction_model(0.01);
  const Mat k = friction_gain();
  const tct::EtsParams p = quiet_params();

  const tct::lmi::Feasibility inside = tct::lmi::solve_feasibility(
      merged_stability(model, k, p, 1, 170), fast_options());
  CHECK(inside.status == tct::lmi::FeasStatus::StrictlyFeasible);

  const tct::lmi::Feasibility outside = tct::lmi::solve_feasibility(
      merged_stability(model, k, p, 1, 177), fast_options());
  CHECK(outside.status != tct::lmi::FeasStatus::StrictlyFeasible);
}

TEST_CASE("shared witness stays valid at every intermediate interval") {
  // Feasibility at the two interval endpoints is certified with one shared
  // witness; the constraint blocks are affine in the interval length, so the
  // same witness must check out at every integer interval in between.
  const tct::LtiModel model = friction_model(0.1);
  const Mat k = friction_gain();
  const tct::EtsParams p = quiet_params();
  const int h_high = 15;

  const tct::lmi::Feasibility vertex = tct::lmi::solve_feasibility(
      merged_stability(model, k, p, 1, h_high), fast_options());
  REQUIRE(vertex.status == tct::lmi::FeasStatus::StrictlyFeasible);

  for (int h = 2; h < h_high; ++h) {
    const tct::lmi::Problem at_h = tct::build_stability_lmi(model, k, p, h);
    const auto evals =
        tct::lmi::eval_constraints(at_h, vertex.witness, 1e-12);
    for (const auto& ev : evals) {
      INFO("interval ", h, " block ", ev.name);
      CHECK(ev.satisfied);
    }
  }
}

TEST_CASE("interval search reports a full table and the largest feasible") {
  const tct::LtiModel stable = scalar_model(0.5, 1.0);
  Mat k(1, 1);
  k << -0.4;
  const tct::EtsParams p = quiet_params();
  const tct::IntervalSearchResult r = tct::max_interval_search(
      [&](int h) { return tct::build_stability_lmi(stable, k, p, h); }, 1, 6,
      fast_options());

  REQUIRE(r.table.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(r.table[i].first == i + 1);
  CHECK(r.h_max >= 1);
  CHECK(r.best.status == tct::lmi::FeasStatus::StrictlyFeasible);
  // The reported maximum is exactly the largest strictly feasible candidate.
  int largest = 0;
  for (const auto& [h, st] : r.table) {
    if (st == tct::lmi::FeasStatus::StrictlyFeasible) largest = h;
  }
  CHECK(r.h_max == largest);
}

TEST_CASE("search with no feasible interval reports the failure") {
  const tct::LtiModel unstable = scalar_model(1.5, 1.0);
  const Mat k = Mat::Constant(1, 1, 0.2);
  const tct::EtsParams p = quiet_params();
  CHECK_THROWS_AS(
      tct::max_interval_search(
          [&](int h) { return tct::build_stability_lmi(unstable, k, p, h); }, 1, 3,
          fast_options()),
      tct::NoFeasibleH);
}

TEST_CASE("uncontrollable pair admits no co-design certificate") {
  // a = 2 with zero input column: no gain exists, so the co-design search
  // must come up empty.
  const tct::LtiModel model = scalar_model(2.0, 0.0);
  const tct::EtsParams p = quiet_params();
  const tct::lmi::Feasibility res = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) { return tct::build_model_codesign_lmi(model, p, h); }, 1, 1),
      fast_options());
  CHECK(res.status != tct::lmi::FeasStatus::StrictlyFeasible);
}

TEST_CASE("model co-design recovers a stabilizing gain for the friction plant") {
  const tct::LtiModel model = friction_model(0.1);
  const tct::EtsParams p = quiet_params();

  const tct::lmi::Feasibility res = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) { return tct::build_model_codesign_lmi(model, p, h); }, 1,
          10));
  REQUIRE(res.status == tct::lmi::FeasStatus::StrictlyFeasible);

  const tct::EtsDesign design =
      tct::extract_design(res.witness, tct::DesignOrigin::ModelBased,
                          std::nullopt, res.margin);
  CHECK(oracles::spectral_radius(model.a + model.b * design.k) < 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> eig(design.omega);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("near-noiseless data co-design transfers to the known model") {
  const tct::DataRep rep = friction_data_rep(1e-6, 42);
  const tct::EtsParams p = quiet_params();

  const tct::lmi::Feasibility res = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) { return tct::build_data_codesign_lmi(rep, p, h); }, 1, 10));
  REQUIRE(res.status == tct::lmi::FeasStatus::StrictlyFeasible);
  CHECK(res.margin > 0.0);

  const tct::EtsDesign design =
      tct::extract_design(res.witness, tct::DesignOrigin::DataDriven,
                          std::nullopt, res.margin);
  CHECK(design.origin == tct::DesignOrigin::DataDriven);

  // The recovered gain must stabilize the true plant the data came from.
  const tct::LtiModel model = friction_model(0.1);
  CHECK(oracles::spectral_radius(model.a + model.b * design.k) < 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> eig(design.omega);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("data noise inflation can only shrink the certified range") {
  // Same records, but analyzed under a noise bound three orders larger:
  // the consistency set balloons and the co-design certificate at the same
  // range must disappear.
  const tct::LtiModel model = friction_model(0.1);
  const Mat b_w = 0.01 * Mat::Identity(2, 2);
  const tct::ExperimentData data =
      tct::generate_experiment(model, b_w, 800, -1.0, 1.0, 1e-4, 42);
  const tct::EtsParams p = quiet_params();

  const tct::NoiseBound honest = tct::box_noise_bound(1e-4, 800, 2);
  const tct::lmi::Feasibility small_set = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) {
            return tct::build_data_codesign_lmi(tct::assemble_theta(data, honest), p,
                                       h);
          },
          1, 10),
      fast_options());
  CHECK(small_set.status == tct::lmi::FeasStatus::StrictlyFeasible);

  const tct::NoiseBound inflated = tct::box_noise_bound(0.5, 800, 2);
  const tct::lmi::Feasibility big_set = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) {
            return tct::build_data_codesign_lmi(tct::assemble_theta(data, inflated), p,
                                       h);
          },
          1, 10),
      fast_options());
  CHECK(big_set.status != tct::lmi::FeasStatus::StrictlyFeasible);
}

TEST_CASE("prescribing the gain never beats the free design on the same data") {
  const tct::DataRep rep = friction_data_rep(0.001, 42);
  const tct::EtsParams p = quiet_params();
  const Mat k = friction_gain();

  int fixed_max = 0;
  try {
    const tct::IntervalSearchResult fixed = tct::max_interval_search(
        [&](int h) { return tct::build_data_codesign_lmi(rep, p, h, k); }, 1, 8,
        fast_options());
    fixed_max = fixed.h_max;
  } catch (const tct::NoFeasibleH&) {
    fixed_max = 0;
  }

  // The free co-design feasible set contains every fixed-gain solution, so
  // its certified range extends at least as far.
  const int probe = std::max(fixed_max, 1);
  const tct::lmi::Feasibility free_at_probe = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) { return tct::build_data_codesign_lmi(rep, p, h); }, 1, probe),
      fast_options());
  CHECK(free_at_probe.status == tct::lmi::FeasStatus::StrictlyFeasible);
}

TEST_CASE("prescribed-gain problems eliminate the gain variable") {
  const tct::DataRep rep = friction_data_rep(0.001, 42);
  const tct::EtsParams p = quiet_params();
  const tct::lmi::Problem free_problem = tct::build_data_codesign_lmi(rep, p, 2);
  const tct::lmi::Problem fixed_problem =
      tct::build_data_codesign_lmi(rep, p, 2, friction_gain());

  auto has_var = [](const tct::lmi::Problem& prob, const char* name) {
    return std::any_of(prob.variables.begin(), prob.variables.end(),
                       [&](const tct::lmi::VarSpec& v) {
                         return v.name == name;
                       });
  };
  CHECK(has_var(free_problem, "K_c"));
  CHECK(has_var(free_problem, "G"));
  CHECK(!has_var(fixed_problem, "K_c"));
  CHECK(has_var(fixed_problem, "G"));
}

TEST_CASE("identity transformation leaves the design unchanged") {
  Mat k_c(1, 2);
  k_c << -0.3, -4.0;
  Mat omega_z(2, 2);
  omega_z << 2.0, 0.3, 0.3, 1.0;
  tct::lmi::Assignment witness;
  witness["G"] = Mat::Identity(2, 2);
  witness["K_c"] = k_c;
  witness["Omega_z"] = omega_z;

  const tct::EtsDesign design =
      tct::extract_design(witness, tct::DesignOrigin::DataDriven);
  CHECK((design.k - k_c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((design.omega - omega_z).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("recovered gain and trigger matrix match hand inversion") {
  tct::Rng rng(2026);
  for (int trial = 0; trial < 20; ++trial) {
    Mat g(2, 2);
    do {
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) g(i, j) = 2.0 * rng.uniform01() - 1.0;
    } while (std::abs(g.determinant()) < 0.1);

    Mat k0(1, 2);
    k0 << 2.0 * rng.uniform01() - 1.0, 2.0 * rng.uniform01() - 1.0;
    Mat base(2, 2);
    base << 1.5, 0.2, 0.2, 0.8;

    tct::lmi::Assignment witness;
    witness["G"] = g;
    witness["K_c"] = k0 * g;
    witness["Omega_z"] = g.transpose() * base * g;

    const tct::EtsDesign design =
        tct::extract_design(witness, tct::DesignOrigin::DataDriven);
    CHECK((design.k - k0).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((design.omega - base).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("prescribed gain takes precedence during recovery") {
  Mat g(2, 2);
  g << 2.0, 0.1, -0.3, 1.5;
  Mat base(2, 2);
  base << 1.0, 0.0, 0.0, 1.0;
  Mat k_fixed(1, 2);
  k_fixed << -3.75, -11.5;

  tct::lmi::Assignment witness;
  witness["G"] = g;
  witness["Omega_z"] = g.transpose() * base * g;

  const tct::EtsDesign design = tct::extract_design(
      witness, tct::DesignOrigin::DataDriven, k_fixed);
  CHECK((design.k - k_fixed).cwiseAbs().maxCoeff() == 0.0);
  CHECK((design.omega - base).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("near-singular transformation is rejected") {
  tct::lmi::Assignment witness;
  Mat g = Mat::Identity(2, 2);
  g(1, 1) = 1e-11;
  witness["G"] = g;
  witness["K_c"] = Mat::Zero(1, 2);
  witness["Omega_z"] = Mat::Identity(2, 2);
  CHECK_THROWS_AS(
      tct::extract_design(witness, tct::DesignOrigin::DataDriven),
      tct::SingularG);
}

TEST_CASE("witnesses lacking the gain require a prescribed one") {
  tct::lmi::Assignment witness;
  witness["Omega"] = Mat::Identity(2, 2);
  CHECK_THROWS_AS(
      tct::extract_design(witness, tct::DesignOrigin::ModelBased),
      tct::MissingVariable);

  const tct::EtsDesign design = tct::extract_design(
      witness, tct::DesignOrigin::ModelBased, friction_gain());
  CHECK((design.k - friction_gain()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((design.omega - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transmit-every-sample mode equals zeroed trigger weights") {
  const tct::LtiModel model = friction_model(0.1);
  const Mat k = friction_gain();

  tct::EtsParams weighted;
  weighted.sigma1 = 0.5;
  weighted.sigma2 = 0.5;
  weighted.periodic_mode = true;

  tct::EtsParams zeroed;
  zeroed.sigma1 = 0.0;
  zeroed.sigma2 = 0.0;

  const std::string lhs =
      tct::lmi::problem_to_json(tct::build_stability_lmi(model, k, weighted, 3));
  const std::string rhs =
      tct::lmi::problem_to_json(tct::build_stability_lmi(model, k, zeroed, 3));
  CHECK(lhs == rhs);
}

TEST_CASE("active trigger weights keep the certificate feasible") {
  // The dynamic-trigger configuration used by the closed-loop runs: both
  // weights at one half, a two-sample interval, and a designed gain.
  const tct::DataRep rep = friction_data_rep(1e-4, 42);
  tct::EtsParams p;
  p.sigma1 = 0.5;
  p.sigma2 = 0.5;
  p.lambda = 0.2;
  p.theta = 2.0;

  const tct::lmi::Feasibility res = tct::lmi::solve_feasibility(
      tct::merge_at_vertices(
          [&](int h) { return tct::build_data_codesign_lmi(rep, p, h); }, 1, 2));
  REQUIRE(res.status == tct::lmi::FeasStatus::StrictlyFeasible);

  const tct::EtsDesign design =
      tct::extract_design(res.witness, tct::DesignOrigin::DataDriven,
                          std::nullopt, res.margin);
  const tct::LtiModel model = friction_model(0.1);
  CHECK(oracles::spectral_radius(model.a + model.b * design.k) < 1.0);
}
