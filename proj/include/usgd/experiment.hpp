#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "usgd/data.hpp"
#include "usgd/learner.hpp"

namespace usgd {

struct EvalResult {
  double test_error = 0.0;
  double mean_hinge = 0.0;     // mean of (1 - margin)_+
  double mean_sq_hinge = 0.0;  // mean of (1/2)(1 - margin)_+^2
};

// Test error, mean hinge and mean half-squared hinge of one parameter.
// A zero margin counts as an error. Verifies the mistake-bound inequality
// (error <= mean hinge and error <= mean of the unhalved squared hinge)
// on the batch; a violation is a logic error.
EvalResult evaluate_binary(std::span<const double> theta, const std::vector<Sample>& test);
EvalResult evaluate_multiclass(const std::vector<Vec>& theta_blocks,
                               const std::vector<Sample>& test);

struct RateFit {
  double slope = 0.0;
  // Index (into the input list) of the first exactly-zero value, if any.
  std::optional<std::size_t> first_zero_index;
};

// Least-squares slope of log(value) against log(t). Zero values are
// dropped; fewer than 5 usable points is an error.
RateFit fit_rate(std::span<const std::uint64_t> ts, std::span<const double> values);

// Right-hand sides of the convergence statements, evaluated at step n.
struct BoundParams {
  Task task = Task::kBinary;
  Regime regime = Regime::kSeparable;
  double mu = 1.0;
  MarginAssumptions assumptions;
  double theta1_distance = 0.0;  // ||theta_1 - theta*||
};

double theorem_bound_at(const BoundParams& params, std::uint64_t n);

struct BoundCheck {
  std::uint64_t n = 0;
  double bound = 0.0;
  double observed = 0.0;
  bool ok = false;
};

std::vector<BoundCheck> verify_theorem_bound(std::span<const std::uint64_t> ts,
                                             std::span<const double> observed_hinge,
                                             const BoundParams& params);

// Geometric checkpoint schedule: `count` points from min(10, n) to n.
std::vector<std::uint64_t> geometric_checkpoints(std::uint64_t n, std::size_t count = 30);

struct CheckpointRow {
  std::uint64_t t = 0;
  std::uint64_t queries = 0;
  double sigma_sum = 0.0;
  double test_error = 0.0;
  double mean_hinge = 0.0;
  double mean_sq_hinge = 0.0;
  double theta_bar_norm = 0.0;
  double theta_norm = 0.0;  // raw iterate, for projection checks
  double bound = std::numeric_limits<double>::quiet_NaN();
  bool bound_checked = false;
  bool bound_ok = true;
  double wall_seconds = 0.0;  // in-memory only, never serialized
};

struct ExperimentTrace {
  std::vector<CheckpointRow> rows;
  double gamma = 0.0;
  double mu = 0.0;
  std::uint64_t learner_seed = 0;
  double sigma_sum_total = 0.0;
  bool all_bounds_ok = true;
};

struct ExperimentOptions {
  std::size_t checkpoint_count = 30;
  bool verify_bounds = false;
  bool evaluate_averaged = true;  // evaluate theta_bar (default) or raw theta
};

// Full single-run pipeline: train on the dataset's stream, evaluate at each
// checkpoint, optionally check the matching theorem bound (requires the
// dataset's exported constants). Asserts trace monotonicity.
ExperimentTrace run_experiment(const Dataset& dataset, const LearnerConfig& config,
                               const ExperimentOptions& options);

struct SweepCell {
  double mu = 0.0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  double mean_hinge = 0.0;
  std::uint64_t queries = 0;
  double query_fraction = 0.0;
  double sigma_sum = 0.0;
  double sigma_fraction = 0.0;
};

struct SweepAggregate {
  double mu = 0.0;
  double mean_test_error = 0.0;
  double stderr_test_error = 0.0;
  double mean_query_fraction = 0.0;
  double mean_sigma_fraction = 0.0;
};

struct SweepReport {
  std::vector<SweepCell> cells;          // one per (mu, seed), mu-major order
  std::vector<SweepAggregate> aggregates;  // one per mu
};

// Trains every (mu, seed) cell on the identical frozen stream. The base
// config must carry an explicit gamma so cells stay comparable; cells only
// differ in mu and in the learner seed.
SweepReport run_mu_sweep(const Dataset& dataset, const std::vector<double>& mu_values,
                         const LearnerConfig& base_config,
                         const std::vector<std::uint64_t>& seeds, unsigned parallelism = 1);

// Equal-label-budget comparison: the fraction of the sampled run's
// checkpoints whose test error is at most the always-query run's error at
// the same number of labels (the always-query run's budget at step t is t;
// its last checkpoint with t <= budget is the reference). Checkpoints
// below the first reference point are skipped.
double equal_budget_win_rate(const ExperimentTrace& sampled, const ExperimentTrace& always);

// Fixed-column emission; all numbers with 12 significant digits.
//   trace:  t,queries,test_error,mean_hinge,mean_sq_hinge,bound,ok
//   sweep:  row,mu,seed,test_error,stderr_test_error,query_fraction,
//           sigma_fraction,queries
std::string trace_csv(const ExperimentTrace& trace);
std::string sweep_csv(const SweepReport& report);

}  // namespace usgd
