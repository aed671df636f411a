#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fakpconv/frames.hpp"
#include "fakpconv/models.hpp"

namespace fakp {

// Max relative error between analytic gradients and central finite
// differences for a scalar loss rebuilt from the current parameter values.
// make_loss must be a pure function of the parameter values (plus anything
// it captures by value). Relative error uses max(1, |analytic|, |fd|) as
// denominator.
double finite_difference_max_rel_error(const std::function<Tensor(Tape&)>& make_loss,
                                       std::vector<Tensor> params, double step = 1e-6);

// Greedy one-to-one matching of frame elements against a candidate set;
// returns the largest matching distance (inf when no bijection exists).
double frame_set_match_deviation(const std::vector<EuclideanTransform>& got,
                                 const std::vector<EuclideanTransform>& expected);

double max_abs_diff(const Tensor& a, const Tensor& b);

// Random cloud with a strongly anisotropic covariance spectrum, so frame
// construction is far from degenerate.
Tensor random_generic_cloud(Rng& rng, std::size_t n, std::size_t d);

// One named property check. `pass` already accounts for the comparison
// direction (negative controls must exceed their threshold).
struct CheckResult {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  int trials = 25;  // per-property random trials
  // Negative control: average only the first branch of each frame. The
  // invariance checks must then fail.
  bool truncate_frame = false;
};

// The self-contained verification suite behind `check`: frame cardinality
// and equivariance for every group, exact invariance / equivariance /
// composition of the wrappers, finite-difference gradient checks for every
// differentiable op, neighbor-search oracle equivalence, the KPConv
// brute-force oracle, parameter census and branch-count accounting, and the
// rotation-sensitivity negative control.
std::vector<CheckResult> run_property_checks(const CheckOptions& options);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace fakp
