#include "usgd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "usgd/errors.hpp"

namespace usgd {

namespace {

// Mistake bound: pointwise 1{margin <= 0} <= hinge and <= hinge^2, so the
// batch means must satisfy the same up to summation rounding.
void check_mistake_bound(double error, double mean_hinge, double mean_hinge_sq) {
  constexpr double tol = 1e-9;
  if (error > mean_hinge * (1.0 + tol) + tol || error > mean_hinge_sq * (1.0 + tol) + tol) {
    throw std::logic_error("evaluate: mistake-bound inequality violated on this batch");
  }
}

EvalResult finish_eval(std::size_t n, std::size_t errors, double hinge_sum, double hinge_sq_sum) {
  EvalResult r;
  r.test_error = static_cast<double>(errors) / static_cast<double>(n);
  r.mean_hinge = hinge_sum / static_cast<double>(n);
  r.mean_sq_hinge = 0.5 * hinge_sq_sum / static_cast<double>(n);
  check_mistake_bound(r.test_error, r.mean_hinge, hinge_sq_sum / static_cast<double>(n));
  return r;
}

}  // namespace

EvalResult evaluate_binary(std::span<const double> theta, const std::vector<Sample>& test) {
  if (test.empty()) throw InvalidInputError("evaluate: empty test set");
  std::size_t errors = 0;
  double hinge_sum = 0.0, hinge_sq_sum = 0.0;
  for (const Sample& s : test) {
    if (!s.label.has_value()) throw InvalidInputError("evaluate: sample without label");
    const double margin = static_cast<double>(*s.label) * dot(theta, s.features);
    if (margin <= 0.0) ++errors;
    const double h = margin >= 1.0 ? 0.0 : 1.0 - margin;
    hinge_sum += h;
    hinge_sq_sum += h * h;
  }
  return finish_eval(test.size(), errors, hinge_sum, hinge_sq_sum);
}

EvalResult evaluate_multiclass(const std::vector<Vec>& theta_blocks,
                               const std::vector<Sample>& test) {
  if (test.empty()) throw InvalidInputError("evaluate: empty test set");
  const int k = static_cast<int>(theta_blocks.size());
  std::size_t errors = 0;
  double hinge_sum = 0.0, hinge_sq_sum = 0.0;
  for (const Sample& s : test) {
    if (!s.label.has_value()) throw InvalidInputError("evaluate: sample without label");
    const int y = *s.label;
    if (y < 1 || y > k) throw InvalidInputError("evaluate: label outside {1..k}");
    double own = 0.0, best_other = 0.0;
    bool have_other = false;
    for (int c = 1; c <= k; ++c) {
      const double sc = dot(theta_blocks[static_cast<std::size_t>(c) - 1], s.features);
      if (c == y) {
        own = sc;
      } else if (!have_other || sc > best_other) {
        best_other = sc;
        have_other = true;
      }
    }
    const double margin = own - best_other;
    if (margin <= 0.0) ++errors;
    const double h = margin >= 1.0 ? 0.0 : 1.0 - margin;
    hinge_sum += h;
    hinge_sq_sum += h * h;
  }
  return finish_eval(test.size(), errors, hinge_sum, hinge_sq_sum);
}

RateFit fit_rate(std::span<const std::uint64_t> ts, std::span<const double> values) {
  if (ts.size() != values.size()) throw InvalidInputError("fit_rate: length mismatch");
  RateFit fit;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (values[i] == 0.0) {
      if (!fit.first_zero_index.has_value()) fit.first_zero_index = i;
      continue;
    }
    if (!(values[i] > 0.0) || ts[i] == 0) {
      throw InvalidInputError("fit_rate: values must be non-negative with positive t");
    }
    lx.push_back(std::log(static_cast<double>(ts[i])));
    ly.push_back(std::log(values[i]));
  }
  if (lx.size() < 5) {
    throw InsufficientDataError("fit_rate: need at least 5 positive points, have " +
                                std::to_string(lx.size()));
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

double theorem_bound_at(const BoundParams& p, std::uint64_t n) {
  if (n == 0) throw InvalidInputError("theorem_bound_at: n must be >= 1");
  p.assumptions.validate();
  if (!(p.mu > 0.0)) throw InvalidInputError("theorem_bound_at: mu must be > 0");
  const double R = p.assumptions.R;
  const double rho = p.assumptions.rho_star;
  const double eta = p.assumptions.eta;
  const double m = std::min(1.0 / p.mu, (rho - 1.0) / (1.0 + p.mu));
  const double dist_sq = p.theta1_distance * p.theta1_distance;

  double lead = 0.0;  // R^2 max{1,1/mu}  or  R^2 (1+BR)
  double br = 0.0;
  if (p.task == Task::kBinary) {
    lead = R * R * std::max(1.0, 1.0 / p.mu);
  } else {
    if (!p.assumptions.B.has_value()) {
      throw InvalidInputError("theorem_bound_at: multiclass bounds require B");
    }
    br = *p.assumptions.B * R;
    lead = R * R * (1.0 + br);
  }

  switch (p.regime) {
    case Regime::kSeparable:
      return lead * dist_sq / (m * m * static_cast<double>(n));
    case Regime::kNoisyLow: {
      if (!p.assumptions.theta_star_norm.has_value()) {
        throw InvalidInputError("theorem_bound_at: noisy bounds require theta_star_norm");
      }
      const double rts = R * *p.assumptions.theta_star_norm;
      const double noise = p.task == Task::kBinary
                               ? std::max((1.0 + rts) / (1.0 + p.mu), rts)
                               : 1.0 + rts;
      const double gap = (1.0 - eta) * m - eta * noise;
      if (!(gap > 0.0)) {
        throw InvalidInputError("theorem_bound_at: eta too large for the noisy-low bound");
      }
      return lead * dist_sq / (gap * gap * static_cast<double>(n));
    }
    case Regime::kNoisyHigh: {
      if (!p.assumptions.theta_star_norm.has_value()) {
        throw InvalidInputError("theorem_bound_at: noisy bounds require theta_star_norm");
      }
      if (!p.assumptions.B.has_value()) {
        throw InvalidInputError("theorem_bound_at: the noisy-high bound requires B");
      }
      const double rts = R * *p.assumptions.theta_star_norm;
      const double one_br = 1.0 + *p.assumptions.B * R;
      const double lead_noisy =
          p.task == Task::kBinary ? R * R * std::max(1.0, 1.0 / p.mu) : R * R * one_br;
      const double head =
          lead_noisy * dist_sq / ((1.0 - eta) * (1.0 - eta) * m * m * static_cast<double>(n));
      // The explicit constant in front of eta.
      const double noise = p.task == Task::kBinary
                               ? std::max((1.0 + rts) / (1.0 + p.mu), rts)
                               : 1.0 + rts;
      const double c2 = 2.0 * one_br * noise / ((1.0 - eta) * m);
      return head + c2 * eta;
    }
  }
  throw InvalidInputError("theorem_bound_at: unknown regime");
}

std::vector<BoundCheck> verify_theorem_bound(std::span<const std::uint64_t> ts,
                                             std::span<const double> observed_hinge,
                                             const BoundParams& params) {
  if (ts.size() != observed_hinge.size()) {
    throw InvalidInputError("verify_theorem_bound: length mismatch");
  }
  std::vector<BoundCheck> checks;
  checks.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    BoundCheck c;
    c.n = ts[i];
    c.bound = theorem_bound_at(params, ts[i]);
    c.observed = observed_hinge[i];
    c.ok = c.observed <= c.bound;
    checks.push_back(c);
  }
  return checks;
}

std::vector<std::uint64_t> geometric_checkpoints(std::uint64_t n, std::size_t count) {
  if (n == 0) throw InvalidInputError("geometric_checkpoints: n must be >= 1");
  if (count < 1) throw InvalidInputError("geometric_checkpoints: count must be >= 1");
  const double first = static_cast<double>(std::min<std::uint64_t>(10, n));
  const double last = static_cast<double>(n);
  std::vector<std::uint64_t> cps;
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    const double v = first * std::pow(last / first, f);
    const std::uint64_t t = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(v)));
    if (cps.empty() || t > cps.back()) cps.push_back(std::min(t, n));
  }
  if (cps.back() != n) cps.push_back(n);
  return cps;
}

namespace {

void check_trace_monotonicity(const ExperimentTrace& trace) {
  std::uint64_t prev_t = 0, prev_q = 0;
  for (const CheckpointRow& r : trace.rows) {
    if (r.t <= prev_t && prev_t != 0) throw std::logic_error("trace: t not strictly increasing");
    if (r.queries < prev_q) throw std::logic_error("trace: queries decreased");
    if (r.queries > r.t) throw std::logic_error("trace: queries exceed t");
    prev_t = r.t;
    prev_q = r.queries;
  }
}

BoundParams bound_params_for(const Dataset& dataset, const LearnerConfig& config) {
  if (!config.assumptions.has_value()) {
    throw InvalidInputError("run_experiment: bound verification needs margin assumptions");
  }
  if (!std::isfinite(dataset.theta_star_norm)) {
    throw InvalidInputError("run_experiment: bound verification needs the dataset's exact"
                            " constants (synthetic data only)");
  }
  BoundParams p;
  p.task = dataset.k == 0 ? Task::kBinary : Task::kMulticlass;
  p.regime = config.regime;
  p.mu = config.sampling.mu;
  p.assumptions = *config.assumptions;
  // Training starts at theta_1 = 0, so the initial distance is ||theta*||.
  p.theta1_distance = dataset.theta_star_norm;
  return p;
}

}  // namespace

ExperimentTrace run_experiment(const Dataset& dataset, const LearnerConfig& config,
                               const ExperimentOptions& options) {
  const Task task = dataset.k == 0 ? Task::kBinary : Task::kMulticlass;
  config.validate(task);
  const std::vector<std::uint64_t> cps =
      geometric_checkpoints(dataset.train.size(), options.checkpoint_count);

  ExperimentTrace trace;
  trace.gamma = config.resolve_gamma(task);
  trace.mu = config.sampling.mu;
  trace.learner_seed = config.sampling.rng_seed;

  VectorOracle oracle(dataset.train);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::optional<BoundParams> bound;
  if (options.verify_bounds) bound = bound_params_for(dataset, config);

  auto push_row = [&](std::uint64_t t, std::uint64_t queries, double sigma_sum,
                      const EvalResult& ev, double theta_bar_norm, double theta_norm) {
    CheckpointRow row;
    row.t = t;
    row.queries = queries;
    row.sigma_sum = sigma_sum;
    row.test_error = ev.test_error;
    row.mean_hinge = ev.mean_hinge;
    row.mean_sq_hinge = ev.mean_sq_hinge;
    row.theta_bar_norm = theta_bar_norm;
    row.theta_norm = theta_norm;
    if (bound.has_value()) {
      row.bound = theorem_bound_at(*bound, t);
      row.bound_checked = true;
      row.bound_ok = ev.mean_hinge <= row.bound;
      trace.all_bounds_ok = trace.all_bounds_ok && row.bound_ok;
    }
    row.wall_seconds = wall();
    trace.rows.push_back(row);
  };

  if (task == Task::kBinary) {
    BinaryModel model(dataset.d);
    const BinaryTrainTrace tt =
        train_stream_binary(model, dataset.train, oracle, config, cps);
    trace.sigma_sum_total = tt.sigma_sum;
    for (const BinarySnapshot& s : tt.snapshots) {
      const Vec& w = options.evaluate_averaged ? s.theta_bar : s.theta;
      push_row(s.t, s.queries, s.sigma_sum, evaluate_binary(w, dataset.test),
               norm(s.theta_bar), norm(s.theta));
    }
  } else {
    if (!config.projection.has_value()) {
      throw InvalidInputError("run_experiment: multiclass runs need a projection radius");
    }
    MulticlassModel model(static_cast<std::size_t>(dataset.k), dataset.d, *config.projection);
    const MulticlassTrainTrace tt =
        train_stream_multiclass(model, dataset.train, oracle, config, cps);
    trace.sigma_sum_total = tt.sigma_sum;
    for (const MulticlassSnapshot& s : tt.snapshots) {
      const std::vector<Vec>& w = options.evaluate_averaged ? s.theta_bar : s.theta;
      double sq_bar = 0.0, sq_raw = 0.0;
      for (const Vec& b : s.theta_bar) sq_bar += squared_norm(b);
      for (const Vec& b : s.theta) sq_raw += squared_norm(b);
      push_row(s.t, s.queries, s.sigma_sum, evaluate_multiclass(w, dataset.test),
               std::sqrt(sq_bar), std::sqrt(sq_raw));
    }
  }
  check_trace_monotonicity(trace);
  return trace;
}

SweepReport run_mu_sweep(const Dataset& dataset, const std::vector<double>& mu_values,
                         const LearnerConfig& base_config,
                         const std::vector<std::uint64_t>& seeds, unsigned parallelism) {
  if (seeds.empty()) throw InvalidInputError("run_mu_sweep: need at least one seed");
  if (mu_values.empty()) throw InvalidInputError("run_mu_sweep: need at least one mu");
  for (double mu : mu_values) {
    if (!(mu >= 0.0)) throw InvalidInputError("run_mu_sweep: mu values must be >= 0");
  }
  if (!base_config.gamma.has_value()) {
    throw InvalidInputError("run_mu_sweep: the sweep shares one explicit gamma across cells;"
                            " set learner gamma to a number");
  }
  const std::uint64_t n = dataset.train.size();
  const std::vector<std::uint64_t> final_cp{n};

  SweepReport report;
  report.cells.resize(mu_values.size() * seeds.size());
  std::atomic<std::size_t> next{0};

  auto run_cell = [&](std::size_t index) {
    const double mu = mu_values[index / seeds.size()];
    const std::uint64_t seed = seeds[index % seeds.size()];
    LearnerConfig config = base_config;
    config.sampling.mu = mu;
    config.sampling.rng_seed = seed;
    VectorOracle oracle(dataset.train);
    SweepCell cell;
    cell.mu = mu;
    cell.seed = seed;
    if (dataset.k == 0) {
      BinaryModel model(dataset.d);
      const BinaryTrainTrace tt =
          train_stream_binary(model, dataset.train, oracle, config, final_cp);
      const EvalResult ev = evaluate_binary(tt.snapshots.back().theta_bar, dataset.test);
      cell.test_error = ev.test_error;
      cell.mean_hinge = ev.mean_hinge;
      cell.queries = model.queries;
      cell.sigma_sum = tt.sigma_sum;
    } else {
      if (!config.projection.has_value()) {
        throw InvalidInputError("run_mu_sweep: multiclass sweeps need a projection radius");
      }
      MulticlassModel model(static_cast<std::size_t>(dataset.k), dataset.d, *config.projection);
      const MulticlassTrainTrace tt =
          train_stream_multiclass(model, dataset.train, oracle, config, final_cp);
      const EvalResult ev = evaluate_multiclass(tt.snapshots.back().theta_bar, dataset.test);
      cell.test_error = ev.test_error;
      cell.mean_hinge = ev.mean_hinge;
      cell.queries = model.queries;
      cell.sigma_sum = tt.sigma_sum;
    }
    cell.query_fraction = static_cast<double>(cell.queries) / static_cast<double>(n);
    cell.sigma_fraction = cell.sigma_sum / static_cast<double>(n);
    report.cells[index] = cell;
  };

  const std::size_t total = report.cells.size();
  if (parallelism <= 1) {
    for (std::size_t i = 0; i < total; ++i) run_cell(i);
  } else {
    std::vector<std::thread> workers;
    const unsigned count = std::min<unsigned>(parallelism, static_cast<unsigned>(total));
    for (unsigned w = 0; w < count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) run_cell(i);
      });
    }
    for (std::thread& t : workers) t.join();
  }

  for (std::size_t mi = 0; mi < mu_values.size(); ++mi) {
    SweepAggregate agg;
    agg.mu = mu_values[mi];
    const std::size_t base = mi * seeds.size();
    double sum_e = 0.0, sum_qf = 0.0, sum_sf = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      sum_e += report.cells[base + s].test_error;
      sum_qf += report.cells[base + s].query_fraction;
      sum_sf += report.cells[base + s].sigma_fraction;
    }
    const double ns = static_cast<double>(seeds.size());
    agg.mean_test_error = sum_e / ns;
    agg.mean_query_fraction = sum_qf / ns;
    agg.mean_sigma_fraction = sum_sf / ns;
    double var = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double d = report.cells[base + s].test_error - agg.mean_test_error;
      var += d * d;
    }
    agg.stderr_test_error =
        seeds.size() > 1 ? std::sqrt(var / (ns - 1.0) / ns) : 0.0;
    report.aggregates.push_back(agg);
  }
  return report;
}

double equal_budget_win_rate(const ExperimentTrace& sampled, const ExperimentTrace& always) {
  int wins = 0, comparable = 0;
  for (const CheckpointRow& row : sampled.rows) {
    const CheckpointRow* ref = nullptr;
    for (const CheckpointRow& vrow : always.rows) {
      if (vrow.t <= row.queries) ref = &vrow;
    }
    if (ref == nullptr) continue;
    ++comparable;
    if (row.test_error <= ref->test_error) ++wins;
  }
  if (comparable == 0) {
    throw InsufficientDataError("equal_budget_win_rate: no comparable checkpoints");
  }
  return static_cast<double>(wins) / static_cast<double>(comparable);
}

namespace {

std::string num12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string trace_csv(const ExperimentTrace& trace) {
  std::string out = "t,queries,test_error,mean_hinge,mean_sq_hinge,bound,ok\n";
  for (const CheckpointRow& r : trace.rows) {
    out += std::to_string(r.t);
    out += ',';
    out += std::to_string(r.queries);
    out += ',';
    out += num12(r.test_error);
    out += ',';
    out += num12(r.mean_hinge);
    out += ',';
    out += num12(r.mean_sq_hinge);
    out += ',';
    out += r.bound_checked ? num12(r.bound) : "nan";
    out += ',';
    out += r.bound_checked ? (r.bound_ok ? "1" : "0") : "nan";
    out += '\n';
  }
  return out;
}

std::string sweep_csv(const SweepReport& report) {
  std::string out =
      "row,mu,seed,test_error,stderr_test_error,query_fraction,sigma_fraction,queries\n";
  for (const SweepCell& c : report.cells) {
    out += "cell,";
    out += num12(c.mu);
    out += ',';
    out += std::to_string(c.seed);
    out += ',';
    out += num12(c.test_error);
    out += ",nan,";
    out += num12(c.query_fraction);
    out += ',';
    out += num12(c.sigma_fraction);
    out += ',';
    out += std::to_string(c.queries);
    out += '\n';
  }
  for (const SweepAggregate& a : report.aggregates) {
    out += "aggregate,";
    out += num12(a.mu);
    out += ",nan,";
    out += num12(a.mean_test_error);
    out += ',';
    out += num12(a.stderr_test_error);
    out += ',';
    out += num12(a.mean_query_fraction);
    out += ',';
    out += num12(a.mean_sigma_fraction);
    out += ",nan\n";
  }
  return out;
}

}  // namespace usgd
