#include "usgd/learner.hpp"

#include <cmath>

#include "doctest.h"
#include "usgd/data.hpp"
#include "usgd/errors.hpp"

using namespace usgd;

namespace {

MarginAssumptions make_assumptions(double rho, double R) {
  MarginAssumptions a;
  a.rho_star = rho;
  a.R = R;
  return a;
}

struct ThrowingOracle : LabelOracle {
 private:
  int fetch(std::size_t) override { throw QueryError("backend down"); }
};

LearnerConfig always_config(double gamma, std::uint64_t seed = 0) {
  LearnerConfig c;
  c.gamma = gamma;
  c.sampling.mode = SamplingMode::kAlways;
  c.sampling.rng_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("derive_step_size separable binary") {
  CHECK(derive_step_size(make_assumptions(3.0, 1.0), 1.0, Task::kBinary, Regime::kSeparable) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(derive_step_size(make_assumptions(2.0, 2.0), 2.0, Task::kBinary, Regime::kSeparable) ==
        doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  CHECK_THROWS_AS(
      derive_step_size(make_assumptions(3.0, 1.0), 0.0, Task::kBinary, Regime::kSeparable),
      InvalidInputError);
}

TEST_CASE("derive_step_size multiclass variants") {
  MarginAssumptions a = make_assumptions(3.0, 2.0);
  CHECK_THROWS_AS(derive_step_size(a, 1.0, Task::kMulticlass, Regime::kSeparable),
                  InvalidInputError);
  a.B = 1.5;
  // min{1, 1} / (4 * (1 + 3)) = 1/16
  const double g = derive_step_size(a, 1.0, Task::kMulticlass, Regime::kSeparable);
  CHECK(g == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
  const double gh = derive_step_size(a, 1.0, Task::kMulticlass, Regime::kSeparable, true);
  CHECK(gh == doctest::Approx(g / 2.0).epsilon(1e-15));
}

TEST_CASE("noisy-low collapses to separable at eta 0") {
  MarginAssumptions a = make_assumptions(2.5, 1.5);
  a.eta = 0.0;
  a.theta_star_norm = 3.0;
  const double sep = derive_step_size(a, 0.7, Task::kBinary, Regime::kSeparable);
  const double low = derive_step_size(a, 0.7, Task::kBinary, Regime::kNoisyLow);
  CHECK(sep == low);

  a.B = 2.0;
  const double sep_mc = derive_step_size(a, 0.7, Task::kMulticlass, Regime::kSeparable);
  const double low_mc = derive_step_size(a, 0.7, Task::kMulticlass, Regime::kNoisyLow);
  CHECK(sep_mc == low_mc);
}

TEST_CASE("noisy-low threshold boundary") {
  for (double mu : {0.5, 1.0, 2.0, 4.0}) {
    for (double rho : {1.5, 3.0}) {
      for (double R : {1.0, 2.0}) {
        for (double tsn : {1.0, 5.0}) {
          for (Task task : {Task::kBinary, Task::kMulticlass}) {
            MarginAssumptions a = make_assumptions(rho, R);
            a.theta_star_norm = tsn;
            a.B = 2.0;
            const double thr = noisy_low_eta_threshold(a, mu, task);
            CHECK(thr > 0.0);
            CHECK(thr < 1.0);
            a.eta = thr * (1.0 - 1e-6);
            CHECK(derive_step_size(a, mu, task, Regime::kNoisyLow) > 0.0);
            a.eta = thr * (1.0 + 1e-6);
            CHECK_THROWS_AS(derive_step_size(a, mu, task, Regime::kNoisyLow),
                            RegimeMismatchError);
            // noisy-high accepts the same eta
            CHECK(derive_step_size(a, mu, task, Regime::kNoisyHigh) > 0.0);
          }
        }
      }
    }
  }
}

TEST_CASE("step_binary hand-checked update") {
  BinaryModel m(2);
  std::vector<Sample> data{Sample{{1.0, 0.0}, 1}};
  VectorOracle oracle(data);
  Rng rng(1);
  const QueryRecord rec =
      step_binary(m, data[0].features, 0, oracle, always_config(0.5), rng);
  CHECK(rec.queried);
  CHECK(rec.hinge == 1.0);
  CHECK(m.theta == Vec{0.5, 0.0});
  CHECK(m.t == 1);
  CHECK(m.queries == 1);
  CHECK(m.theta_bar == Vec{0.25, 0.0});  // mean of theta_1=0 and theta_2
}

TEST_CASE("step_binary zero gradient when the margin is satisfied") {
  BinaryModel m(1);
  m.theta = {2.0};
  m.theta_bar = {2.0};
  std::vector<Sample> data{Sample{{1.0}, 1}};
  VectorOracle oracle(data);
  Rng rng(1);
  const QueryRecord rec = step_binary(m, data[0].features, 0, oracle, always_config(0.5), rng);
  CHECK(rec.queried);
  CHECK(rec.hinge == 0.0);
  CHECK(m.theta == Vec{2.0});
  CHECK(m.queries == 1);
  CHECK(oracle.calls() == 1);
}

TEST_CASE("step_binary skips the oracle when the coin is 0") {
  // pick a probability below the generator's first uniform draw
  const double u0 = Rng(99).uniform01();
  REQUIRE(u0 > 0.05);

  BinaryModel m(1);
  m.theta = {40.0};  // large |score| drives sigma down
  m.theta_bar = {40.0};
  std::vector<Sample> data{Sample{{1.0}, 1}};
  VectorOracle oracle(data);
  LearnerConfig c;
  c.gamma = 0.5;
  c.sampling.mode = SamplingMode::kBinaryMargin;
  c.sampling.mu = (1.0 / 0.04 - 1.0) / 40.0;  // sigma = 0.04 < u0
  Rng rng(99);
  const QueryRecord rec = step_binary(m, data[0].features, 0, oracle, c, rng);
  CHECK_FALSE(rec.queried);
  CHECK(oracle.calls() == 0);
  CHECK(m.queries == 0);
  CHECK(m.theta == Vec{40.0});
  CHECK(m.t == 1);
}

TEST_CASE("step_binary leaves the model untouched on oracle failure") {
  BinaryModel m(1);
  m.theta = {0.25};
  ThrowingOracle oracle;
  Rng rng(1);
  CHECK_THROWS_AS(step_binary(m, Vec{1.0}, 0, oracle, always_config(0.5), rng), QueryError);
  CHECK(m.theta == Vec{0.25});
  CHECK(m.t == 0);
  CHECK(m.queries == 0);
}

TEST_CASE("step_multiclass hand-checked update") {
  std::vector<Sample> data{Sample{{1.0}, 1}};
  VectorOracle oracle(data);

  LearnerConfig c = always_config(1.0);
  {
    MulticlassModel m(2, 1, 10.0);
    Rng rng(1);
    const QueryRecord rec = step_multiclass(m, data[0].features, 0, oracle, c, rng);
    CHECK(rec.queried);
    CHECK(rec.hinge == 1.0);
    CHECK(m.theta[0] == Vec{1.0});
    CHECK(m.theta[1] == Vec{-1.0});
  }
  {
    // same step but the ball radius bites: direction preserved, norm 1
    MulticlassModel m(2, 1, 1.0);
    Rng rng(1);
    step_multiclass(m, data[0].features, 0, oracle, c, rng);
    CHECK(m.theta[0][0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(m.theta[1][0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(m.concat_norm() <= 1.0 * (1.0 + 1e-12));
  }
}

TEST_CASE("step_multiclass no-query step only advances t and theta_bar") {
  const double u0 = Rng(99).uniform01();
  REQUIRE(u0 > 0.05);

  MulticlassModel m(2, 1, 10.0);
  m.theta[0] = {3.0};
  m.theta_bar[0] = {3.0};
  std::vector<Sample> data{Sample{{1.0}, 1}};
  VectorOracle oracle(data);
  LearnerConfig c;
  c.gamma = 1.0;
  c.sampling.mode = SamplingMode::kMulticlassTopTwo;
  c.sampling.mu = (1.0 / 0.04 - 1.0) / 3.0;  // top-two gap 3 => sigma = 0.04 < u0
  Rng rng(99);
  const QueryRecord rec = step_multiclass(m, data[0].features, 0, oracle, c, rng);
  CHECK_FALSE(rec.queried);
  CHECK(oracle.calls() == 0);
  CHECK(m.queries == 0);
  CHECK(m.theta[0] == Vec{3.0});
  CHECK(m.theta[1] == Vec{0.0});
  CHECK(m.t == 1);
  CHECK(m.theta_bar[0][0] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("one-sample stream with a zero coin keeps theta_bar at theta_1") {
  const double u0 = Rng(42).uniform01();
  REQUIRE(u0 > 0.05);

  std::vector<Sample> data{Sample{{1.0}, 1}};
  VectorOracle oracle(data);
  BinaryModel m(1);
  m.theta = {50.0};
  m.theta_bar = {50.0};  // theta_bar_1 = theta_1
  LearnerConfig c;
  c.gamma = 0.5;
  c.sampling.mu = (1.0 / 0.04 - 1.0) / 50.0;  // sigma = 0.04 < u0
  c.sampling.rng_seed = 42;
  const BinaryTrainTrace trace =
      train_stream_binary(m, data, oracle, c, std::vector<std::uint64_t>{1});
  CHECK(trace.snapshots[0].queries == 0);
  CHECK(trace.snapshots[0].theta_bar == Vec{50.0});
}

TEST_CASE("update direction is a scalar multiple of y x / delta_x") {
  Rng rng(23);
  std::vector<Sample> data(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.below(5);
    BinaryModel m(d);
    for (double& v : m.theta) v = rng.normal();
    m.theta_bar = m.theta;
    Vec x(d);
    for (double& v : x) v = rng.normal();
    const int y = rng.uniform01() < 0.5 ? 1 : -1;
    data[0] = Sample{x, y};
    VectorOracle oracle(data);
    const Vec before = m.theta;
    const double gamma = 0.3;
    Rng step_rng(trial);
    const QueryRecord rec = step_binary(m, x, 0, oracle, always_config(gamma), step_rng);
    const double a = gamma * static_cast<double>(y) * rec.hinge;
    for (std::size_t i = 0; i < d; ++i) {
      // the accumulate rounds once, so the difference matches a*x[i] to ulp scale
      const double expect = a * x[i];
      const double tol = 4e-16 * (std::abs(before[i]) + std::abs(expect));
      CHECK(std::abs((m.theta[i] - before[i]) - expect) <= tol);
    }
  }
}

TEST_CASE("train_stream_binary basics") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.n_train = 500;
  spec.n_test = 10;
  spec.seed = 5;
  spec.margin_floor = 1.5;
  const Dataset ds = generate_synthetic_binary(spec);

  LearnerConfig c;
  c.gamma = 0.05;
  c.sampling.mode = SamplingMode::kBinaryMargin;
  c.sampling.mu = 0.0;  // sigma identically 1
  c.sampling.rng_seed = 7;

  BinaryModel m(ds.d);
  VectorOracle oracle(ds.train);
  const std::vector<std::uint64_t> cps{100, 500};
  const BinaryTrainTrace trace = train_stream_binary(m, ds.train, oracle, c, cps);
  CHECK(m.queries == 500);  // mu = 0 queries everything
  CHECK(trace.snapshots.size() == 2);
  CHECK(trace.snapshots[0].t == 100);
  CHECK(trace.snapshots[0].queries == 100);
  CHECK(trace.snapshots[1].sigma_sum == doctest::Approx(500.0));
  CHECK(oracle.calls() == m.queries);
}

TEST_CASE("train_stream rejects bad input") {
  std::vector<Sample> empty;
  VectorOracle oracle(empty);
  BinaryModel m(2);
  LearnerConfig c = always_config(0.1);
  CHECK_THROWS_AS(train_stream_binary(m, empty, oracle, c, std::vector<std::uint64_t>{}),
                  InvalidInputError);

  std::vector<Sample> one{Sample{{1.0, 0.0}, 1}};
  VectorOracle o2(one);
  CHECK_THROWS_AS(train_stream_binary(m, one, o2, c, std::vector<std::uint64_t>{2}),
                  InvalidInputError);
  CHECK_THROWS_AS(train_stream_binary(m, one, o2, c, std::vector<std::uint64_t>{1, 1}),
                  InvalidInputError);
}

TEST_CASE("train_stream laziness: oracle calls equal queries") {
  SyntheticSpec spec;
  spec.d = 6;
  spec.n_train = 2000;
  spec.n_test = 10;
  spec.seed = 9;
  spec.margin_floor = 1.5;
  const Dataset ds = generate_synthetic_binary(spec);

  LearnerConfig c;
  c.gamma = 0.1;
  c.sampling.mu = 4.0;
  c.sampling.rng_seed = 3;
  BinaryModel m(ds.d);
  VectorOracle oracle(ds.train);
  train_stream_binary(m, ds.train, oracle, c, std::vector<std::uint64_t>{2000});
  CHECK(oracle.calls() == m.queries);
  CHECK(m.queries < 2000);  // some coins must come up 0 at mu = 4
}

TEST_CASE("train_stream determinism") {
  SyntheticSpec spec;
  spec.d = 5;
  spec.n_train = 1000;
  spec.n_test = 10;
  spec.seed = 31;
  spec.margin_floor = 1.5;
  const Dataset ds = generate_synthetic_binary(spec);
  LearnerConfig c;
  c.gamma = 0.07;
  c.sampling.mu = 2.0;
  c.sampling.rng_seed = 17;

  auto run_once = [&] {
    BinaryModel m(ds.d);
    VectorOracle oracle(ds.train);
    return train_stream_binary(m, ds.train, oracle, c,
                               std::vector<std::uint64_t>{10, 100, 1000});
  };
  const BinaryTrainTrace a = run_once();
  const BinaryTrainTrace b = run_once();
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK(a.snapshots[i].queries == b.snapshots[i].queries);
    CHECK(a.snapshots[i].theta == b.snapshots[i].theta);          // bit-identical
    CHECK(a.snapshots[i].theta_bar == b.snapshots[i].theta_bar);  // bit-identical
  }
}

TEST_CASE("averaged iterate equals the running mean of the iterates") {
  std::vector<Sample> data{Sample{{1.0, 0.0}, 1}, Sample{{0.0, 1.0}, -1},
                           Sample{{0.5, 0.5}, 1}};
  VectorOracle oracle(data);
  BinaryModel m(2);
  LearnerConfig c = always_config(0.25);
  Rng rng(1);
  Vec sum = m.theta;  // theta_1
  for (std::size_t i = 0; i < data.size(); ++i) {
    step_binary(m, data[i].features, i, oracle, c, rng);
    for (std::size_t j = 0; j < 2; ++j) sum[j] += m.theta[j];
  }
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(m.theta_bar[j] == doctest::Approx(sum[j] / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("projection invariant along the whole run") {
  SyntheticSpec spec;
  spec.d = 3;
  spec.n_train = 400;
  spec.n_test = 10;
  spec.seed = 77;
  spec.k = 3;
  spec.margin_floor = 1.5;
  const Dataset ds = generate_synthetic_multiclass(spec);

  const double B = 0.4;
  LearnerConfig c;
  c.gamma = 0.2;
  c.sampling.mode = SamplingMode::kMulticlassTopTwo;
  c.sampling.mu = 1.0;
  c.sampling.rng_seed = 2;
  c.projection = B;
  MulticlassModel m(3, ds.d, B);
  VectorOracle oracle(ds.train);
  const MulticlassTrainTrace trace = train_stream_multiclass(
      m, ds.train, oracle, c, std::vector<std::uint64_t>{50, 100, 200, 400});
  for (const MulticlassSnapshot& s : trace.snapshots) {
    double sq = 0.0;
    for (const Vec& b : s.theta) sq += squared_norm(b);
    CHECK(std::sqrt(sq) <= B * (1.0 + 1e-12));
  }
}

TEST_CASE("query ledger: realized queries track the sigma sum") {
  SyntheticSpec spec;
  spec.d = 5;
  spec.n_train = 2000;
  spec.n_test = 10;
  spec.seed = 13;
  spec.margin_floor = 1.5;
  const Dataset ds = generate_synthetic_binary(spec);

  const int seeds = 50;
  std::vector<double> diffs(seeds);
  for (int s = 0; s < seeds; ++s) {
    LearnerConfig c;
    c.gamma = 0.1;
    c.sampling.mu = 2.0;
    c.sampling.rng_seed = 1000 + static_cast<std::uint64_t>(s);
    BinaryModel m(ds.d);
    VectorOracle oracle(ds.train);
    const BinaryTrainTrace t =
        train_stream_binary(m, ds.train, oracle, c, std::vector<std::uint64_t>{2000});
    diffs[s] = static_cast<double>(m.queries) - t.sigma_sum;
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= seeds;
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= (seeds - 1);
  const double se = std::sqrt(var / seeds);
  CHECK(std::abs(mean) <= 4.0 * se + 1e-9);
}

TEST_CASE("descent in expectation at the derived step size") {
  // Hand-built stream with a genuine margin gap so theta* is reachable:
  // x1 bounded away from 0, truth (3, 0), minimum margin >= 2.1.
  Rng gen(4242);
  const std::size_t n = 800;
  std::vector<Sample> stream;
  stream.reserve(n);
  double min_margin = 1e300, max_norm = 0.0;
  const Vec theta_star{3.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    double x1 = 0.0;
    do {
      x1 = gen.normal();
    } while (std::abs(x1) < 0.7);
    const Vec x{x1, gen.normal()};
    const int y = x1 > 0.0 ? 1 : -1;
    min_margin = std::min(min_margin, y * dot(theta_star, x));
    max_norm = std::max(max_norm, norm(x));
    stream.push_back(Sample{x, y});
  }
  REQUIRE(min_margin >= 2.1);

  LearnerConfig c;
  MarginAssumptions a = make_assumptions(min_margin, max_norm);
  c.assumptions = a;
  c.sampling.mu = 1.0;

  const std::vector<std::uint64_t> cps{25, 50, 100, 200, 400, 800};
  const int seeds = 100;
  std::vector<std::vector<double>> dist_sq(cps.size(), std::vector<double>(seeds));
  for (int s = 0; s < seeds; ++s) {
    c.sampling.rng_seed = 555 + static_cast<std::uint64_t>(s);
    BinaryModel m(2);
    VectorOracle oracle(stream);
    const BinaryTrainTrace t = train_stream_binary(m, stream, oracle, c, cps);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      const Vec& th = t.snapshots[i].theta;
      double sq = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        sq += (th[j] - theta_star[j]) * (th[j] - theta_star[j]);
      }
      dist_sq[i][s] = sq;
    }
  }
  for (std::size_t i = 0; i + 1 < cps.size(); ++i) {
    double mean_d = 0.0;
    for (int s = 0; s < seeds; ++s) mean_d += dist_sq[i + 1][s] - dist_sq[i][s];
    mean_d /= seeds;
    double var = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const double d = dist_sq[i + 1][s] - dist_sq[i][s] - mean_d;
      var += d * d;
    }
    var /= (seeds - 1);
    const double se = std::sqrt(var / seeds);
    CHECK(mean_d <= 4.0 * se + 1e-12);  // one-sided: no increase beyond noise
  }
}
