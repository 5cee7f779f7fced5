#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "usgd/model.hpp"
#include "usgd/rng.hpp"
#include "usgd/sampling.hpp"

namespace usgd {

enum class Task { kBinary, kMulticlass };

enum class Regime { kSeparable, kNoisyLow, kNoisyHigh };

struct LearnerConfig {
  // Explicit step size; nullopt means "derive from assumptions".
  std::optional<double> gamma;
  SamplingConfig sampling;
  std::optional<MarginAssumptions> assumptions;
  std::optional<double> projection;  // ball radius B for the projected updates
  Regime regime = Regime::kSeparable;
  // The separable multiclass step size has two published variants differing
  // by a factor of 2 in the denominator; false selects the larger
  // 1/(R^2 (1+BR)) value, true the 1/(2 R^2 (1+BR)) one.
  bool multiclass_halved_step = false;

  void validate(Task task) const;
  // Resolves gamma: the explicit value if set, otherwise the derived one.
  double resolve_gamma(Task task) const;
};

// Answers "label of sample i" and counts how often it was asked. Training
// must never call this on a step whose query coin came up 0.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  int label_of(std::size_t index) {
    ++calls_;
    return fetch(index);
  }
  std::uint64_t calls() const { return calls_; }

 private:
  virtual int fetch(std::size_t index) = 0;
  std::uint64_t calls_ = 0;
};

// Oracle over an in-memory sample list with hidden labels.
class VectorOracle : public LabelOracle {
 public:
  explicit VectorOracle(const std::vector<Sample>& samples) : samples_(&samples) {}

 private:
  int fetch(std::size_t index) override;
  const std::vector<Sample>* samples_;
};

// Step sizes from the convergence statements.
//
//   binary separable:      min{1/mu,(rho*-1)/(1+mu)} / (R^2 max{1,1/mu})
//   multiclass separable:  min{1/mu,(rho*-1)/(1+mu)} / (R^2 (1+BR))
//   binary noisy-low:      ((1-eta) min{...} - eta max{(1+R|th*|)/(1+mu), R|th*|})
//                            / (R^2 max{1,1/mu})
//   binary noisy-high:     (1-eta) min{...} / (R^2 max{1,1/mu})
//   multiclass noisy-low:  ((1-eta) min{...} - eta (1+R|th*|)) / (R^2 (1+BR))
//   multiclass noisy-high: (1-eta) min{...} / (R^2 (1+BR))
//
// noisy-low throws RegimeMismatchError when eta is at or above the regime
// threshold (the numerator would be non-positive); the message directs the
// caller to noisy-high.
double derive_step_size(const MarginAssumptions& assumptions, double mu, Task task,
                        Regime regime, bool multiclass_halved_step = false);

// The largest eta the noisy-low step size admits (exclusive bound).
double noisy_low_eta_threshold(const MarginAssumptions& assumptions, double mu, Task task);

struct QueryRecord {
  bool queried = false;
  double probability = 0.0;
  // Hinge loss of the queried sample at the pre-update parameter; only
  // meaningful when queried.
  double hinge = 0.0;
  int label = 0;
};

// One step of the binary loop: sigma, Bernoulli coin, on success a label
// query and the hinge-weighted update (projected when configured), and in
// all cases the running-average and counter updates.
QueryRecord step_binary(BinaryModel& model, std::span<const double> x, std::size_t sample_index,
                        LabelOracle& oracle, const LearnerConfig& config, Rng& rng);

// One step of the multiclass loop: sigma from the top-two gap, on success
// the two-block update followed by projection onto the B-ball.
QueryRecord step_multiclass(MulticlassModel& model, std::span<const double> x,
                            std::size_t sample_index, LabelOracle& oracle,
                            const LearnerConfig& config, Rng& rng);

struct BinarySnapshot {
  std::uint64_t t = 0;
  std::uint64_t queries = 0;
  double sigma_sum = 0.0;  // cumulative sum of query probabilities
  Vec theta_bar;
  Vec theta;
};

struct MulticlassSnapshot {
  std::uint64_t t = 0;
  std::uint64_t queries = 0;
  double sigma_sum = 0.0;
  std::vector<Vec> theta_bar;
  std::vector<Vec> theta;
};

template <typename SnapshotT>
struct TrainTrace {
  std::vector<SnapshotT> snapshots;
  double sigma_sum = 0.0;  // over the whole stream
};

using BinaryTrainTrace = TrainTrace<BinarySnapshot>;
using MulticlassTrainTrace = TrainTrace<MulticlassSnapshot>;

// Single pass over the stream in order; snapshots the model at each listed
// step index (checkpoints must be strictly increasing and <= stream size).
BinaryTrainTrace train_stream_binary(BinaryModel& model, const std::vector<Sample>& stream,
                                     LabelOracle& oracle, const LearnerConfig& config,
                                     std::span<const std::uint64_t> checkpoints);

MulticlassTrainTrace train_stream_multiclass(MulticlassModel& model,
                                             const std::vector<Sample>& stream,
                                             LabelOracle& oracle, const LearnerConfig& config,
                                             std::span<const std::uint64_t> checkpoints);

}  // namespace usgd
