#pragma once

#include <nlohmann/json.hpp>

#include "tct/matrixcore.hpp"
#include "tct/sysdata.hpp"

namespace tct {
namespace ident {

// Least-squares identification baseline. Unlike the direct certificate route,
// a design built on the identified matrices carries no guarantee for the true
// plant — the point estimate discards the set of systems consistent with the
// data. Exports are tagged certificate-free so downstream reports can say so.

struct IdentResult {
  Mat a_hat;  // n x n
  Mat b_hat;  // n x m
  // Frobenius norm of the one-step reconstruction error over the record.
  double residual = 0.0;
  // Condition number of the stacked regressor [states; inputs].
  double condition = 0.0;
};

// Minimum-residual estimate of [A B] from one input-state record, solved by
// column-pivoted QR on the stacked regressor (never the normal equations).
// Throws RankDeficient when the regressor rows do not excite every direction.
IdentResult least_squares_id(const ExperimentData& data);

LtiModel identified_model(const IdentResult& id);

// Whether the point estimate lies in the set of plants consistent with the
// record under the declared noise bound. False means the bound was violated
// by the realized disturbance — callers should flag the record.
bool inside_consistent_set(const DataRep& rep, const IdentResult& id,
                           double tol = 1e-9);

// JSON payload for the identified model, loadable for model-based design and
// wait evaluation. Always carries "certificate_free": true.
nlohmann::json ident_to_json(const IdentResult& id);

// Reads a payload written by ident_to_json. Throws SchemaError on malformed
// or wrongly-typed input.
IdentResult ident_from_json(const nlohmann::json& j);

}  // namespace ident
}  // namespace tct
