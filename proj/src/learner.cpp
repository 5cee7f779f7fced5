#include "usgd/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "usgd/errors.hpp"

namespace usgd {

void LearnerConfig::validate(Task task) const {
  sampling.validate();
  if (gamma.has_value()) {
    if (!(*gamma > 0.0)) throw InvalidInputError("LearnerConfig: gamma must be > 0");
  } else {
    if (!assumptions.has_value()) {
      throw InvalidInputError("LearnerConfig: gamma=derive requires margin assumptions");
    }
    if (!(sampling.mu > 0.0)) {
      throw InvalidInputError("LearnerConfig: gamma=derive requires mu > 0");
    }
    assumptions->validate();
  }
  if (projection.has_value() && !(*projection > 0.0)) {
    throw InvalidInputError("LearnerConfig: projection radius must be > 0");
  }
  if (regime == Regime::kNoisyHigh && !projection.has_value()) {
    throw InvalidInputError("LearnerConfig: the noisy-high regime uses the projected update;"
                            " set a projection radius");
  }
  if (task == Task::kMulticlass && !projection.has_value()) {
    throw InvalidInputError("LearnerConfig: the multiclass update is projected; set a"
                            " projection radius");
  }
}

double LearnerConfig::resolve_gamma(Task task) const {
  if (gamma.has_value()) return *gamma;
  return derive_step_size(*assumptions, sampling.mu, task, regime, multiclass_halved_step);
}

int VectorOracle::fetch(std::size_t index) {
  if (index >= samples_->size()) throw QueryError("oracle: sample index out of range");
  const std::optional<int>& y = (*samples_)[index].label;
  if (!y.has_value()) throw QueryError("oracle: sample has no label");
  return *y;
}

namespace {

double min_term(double mu, double rho_star) {
  return std::min(1.0 / mu, (rho_star - 1.0) / (1.0 + mu));
}

// max{(1+R|theta*|)/(1+mu), R|theta*|}: the binary noisy drift constant.
double binary_noise_term(double mu, double r_theta_star) {
  return std::max((1.0 + r_theta_star) / (1.0 + mu), r_theta_star);
}

}  // namespace

double noisy_low_eta_threshold(const MarginAssumptions& a, double mu, Task task) {
  a.validate();
  if (!(mu > 0.0)) throw InvalidInputError("noisy_low_eta_threshold: mu must be > 0");
  if (!a.theta_star_norm.has_value()) {
    throw InvalidInputError("noisy_low_eta_threshold: theta_star_norm required");
  }
  const double m = min_term(mu, a.rho_star);
  const double rts = a.R * *a.theta_star_norm;
  if (task == Task::kBinary) {
    return m / (binary_noise_term(mu, rts) + m);
  }
  return m / (1.0 + m + rts);
}

double derive_step_size(const MarginAssumptions& a, double mu, Task task, Regime regime,
                        bool multiclass_halved_step) {
  a.validate();
  if (!(mu > 0.0)) {
    throw InvalidInputError("derive_step_size: the derived step sizes require mu > 0"
                            " (mu = 0 is the always-query baseline; set gamma explicitly)");
  }
  const double m = min_term(mu, a.rho_star);

  double denom = 0.0;
  if (task == Task::kBinary) {
    denom = a.R * a.R * std::max(1.0, 1.0 / mu);
  } else {
    if (!a.B.has_value()) {
      throw InvalidInputError("derive_step_size: multiclass step sizes require B");
    }
    denom = a.R * a.R * (1.0 + *a.B * a.R);
    if (multiclass_halved_step) denom *= 2.0;
  }

  switch (regime) {
    case Regime::kSeparable:
      return m / denom;
    case Regime::kNoisyHigh:
      return (1.0 - a.eta) * m / denom;
    case Regime::kNoisyLow: {
      if (!a.theta_star_norm.has_value()) {
        throw InvalidInputError("derive_step_size: noisy-low requires theta_star_norm");
      }
      const double rts = a.R * *a.theta_star_norm;
      const double noise =
          task == Task::kBinary ? binary_noise_term(mu, rts) : 1.0 + rts;
      const double numerator = (1.0 - a.eta) * m - a.eta * noise;
      if (!(numerator > 0.0)) {
        std::ostringstream msg;
        msg << "derive_step_size: eta=" << a.eta << " is at or above the noisy-low threshold "
            << noisy_low_eta_threshold(a, mu, task) << "; use the noisy-high regime";
        throw RegimeMismatchError(msg.str());
      }
      return numerator / denom;
    }
  }
  throw InvalidInputError("derive_step_size: unknown regime");
}

QueryRecord step_binary(BinaryModel& model, std::span<const double> x, std::size_t sample_index,
                        LabelOracle& oracle, const LearnerConfig& config, Rng& rng) {
  require_same_dim(model.theta, x, "step_binary");
  QueryRecord rec;
  rec.probability = config.sampling.mode == SamplingMode::kAlways
                        ? 1.0
                        : query_probability_binary(model.theta, x, config.sampling.mu);
  rec.queried = draw_query(rec.probability, rng);
  if (rec.queried) {
    // May throw; the model is untouched in that case.
    rec.label = oracle.label_of(sample_index);
    const double gamma = config.resolve_gamma(Task::kBinary);
    rec.hinge = hinge_binary(x, rec.label, model.theta);
    if (rec.hinge > 0.0) {
      axpy(gamma * static_cast<double>(rec.label) * rec.hinge, x, model.theta);
      if (config.projection.has_value()) project_to_ball(model.theta, *config.projection);
    }
    ++model.queries;
  }
  ++model.t;
  // theta_bar_{t+1} = (1 - 1/(t+1)) theta_bar_t + theta_{t+1} / (t+1)
  const double w = 1.0 / static_cast<double>(model.t + 1);
  for (std::size_t i = 0; i < model.theta_bar.size(); ++i) {
    model.theta_bar[i] = (1.0 - w) * model.theta_bar[i] + w * model.theta[i];
  }
  return rec;
}

QueryRecord step_multiclass(MulticlassModel& model, std::span<const double> x,
                            std::size_t sample_index, LabelOracle& oracle,
                            const LearnerConfig& config, Rng& rng) {
  if (model.dim() != x.size()) throw InvalidInputError("step_multiclass: dimension mismatch");
  QueryRecord rec;
  rec.probability = config.sampling.mode == SamplingMode::kAlways
                        ? 1.0
                        : query_probability_multiclass(model, x, config.sampling.mu);
  rec.queried = draw_query(rec.probability, rng);
  if (rec.queried) {
    rec.label = oracle.label_of(sample_index);
    const double gamma = config.resolve_gamma(Task::kMulticlass);
    const int y_star = best_competitor(model, x, rec.label);
    const double margin = block_score(model, rec.label, x) - block_score(model, y_star, x);
    rec.hinge = margin >= 1.0 ? 0.0 : 1.0 - margin;
    if (rec.hinge > 0.0) {
      axpy(gamma * rec.hinge, x, model.theta[static_cast<std::size_t>(rec.label) - 1]);
      axpy(-gamma * rec.hinge, x, model.theta[static_cast<std::size_t>(y_star) - 1]);
      project_to_ball(model.theta, model.B);
    }
    ++model.queries;
  }
  ++model.t;
  const double w = 1.0 / static_cast<double>(model.t + 1);
  for (std::size_t b = 0; b < model.theta_bar.size(); ++b) {
    for (std::size_t i = 0; i < model.theta_bar[b].size(); ++i) {
      model.theta_bar[b][i] = (1.0 - w) * model.theta_bar[b][i] + w * model.theta[b][i];
    }
  }
  return rec;
}

namespace {

void check_stream_and_checkpoints(std::size_t stream_size,
                                  std::span<const std::uint64_t> checkpoints) {
  if (stream_size == 0) throw InvalidInputError("train_stream: empty stream");
  std::uint64_t prev = 0;
  for (std::uint64_t c : checkpoints) {
    if (c <= prev || c > stream_size) {
      throw InvalidInputError("train_stream: checkpoints must be strictly increasing and"
                              " within the stream length");
    }
    prev = c;
  }
}

}  // namespace

BinaryTrainTrace train_stream_binary(BinaryModel& model, const std::vector<Sample>& stream,
                                     LabelOracle& oracle, const LearnerConfig& config,
                                     std::span<const std::uint64_t> checkpoints) {
  config.validate(Task::kBinary);
  check_stream_and_checkpoints(stream.size(), checkpoints);
  Rng rng(config.sampling.rng_seed);
  BinaryTrainTrace trace;
  std::size_t next_cp = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const QueryRecord rec = step_binary(model, stream[i].features, i, oracle, config, rng);
    trace.sigma_sum += rec.probability;
    if (next_cp < checkpoints.size() && model.t == checkpoints[next_cp]) {
      trace.snapshots.push_back(
          {model.t, model.queries, trace.sigma_sum, model.theta_bar, model.theta});
      ++next_cp;
    }
  }
  return trace;
}

MulticlassTrainTrace train_stream_multiclass(MulticlassModel& model,
                                             const std::vector<Sample>& stream,
                                             LabelOracle& oracle, const LearnerConfig& config,
                                             std::span<const std::uint64_t> checkpoints) {
  config.validate(Task::kMulticlass);
  check_stream_and_checkpoints(stream.size(), checkpoints);
  Rng rng(config.sampling.rng_seed);
  MulticlassTrainTrace trace;
  std::size_t next_cp = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const QueryRecord rec = step_multiclass(model, stream[i].features, i, oracle, config, rng);
    trace.sigma_sum += rec.probability;
    if (next_cp < checkpoints.size() && model.t == checkpoints[next_cp]) {
      trace.snapshots.push_back(
          {model.t, model.queries, trace.sigma_sum, model.theta_bar, model.theta});
      ++next_cp;
    }
  }
  return trace;
}

}  // namespace usgd
