#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "usgd/data.hpp"
#include "usgd/experiment.hpp"
#include "usgd/learner.hpp"

namespace usgd {

// One structured document driving generate/run/sweep; reference encoding is
// JSON. Unknown keys are rejected; every field has a documented default
// except the seeds.
struct RunConfig {
  struct DatasetSection {
    std::string kind = "synthetic";  // "synthetic" | "libsvm"
    std::string task = "binary";     // "binary" | "multiclass"
    int k = 3;
    std::size_t d = 20;
    std::size_t n_train = 20000;
    std::size_t n_test = 15000;
    std::string covariance = "decaying";  // "identity" | "decaying" | "custom"
    Vec covariance_diagonal;
    std::optional<double> margin_floor = 1.5;
    std::optional<std::uint64_t> seed;  // required for synthetic data
    std::string train_path;
    std::string test_path;
    std::string metadata_path;  // optional constants sidecar for libsvm data
    double noise_eta = 0.0;
    std::optional<std::uint64_t> noise_seed;  // required when noise_eta > 0
    bool rff_enabled = false;
    std::size_t rff_D = 500;
    double rff_bandwidth = 0.0;  // 0 => median heuristic
    std::optional<std::uint64_t> rff_seed;
  };

  struct LearnerSection {
    std::optional<double> gamma;      // nullopt encodes "derive"
    double mu = 1.0;
    std::string sampling = "margin";  // "margin" | "always"
    std::string regime = "separable";
    std::optional<double> projection;
    bool projection_two_theta_star = false;  // projection = 2 ||theta*||
    bool multiclass_halved_step = false;
    std::optional<std::uint64_t> seed;  // required
  };

  struct ExperimentSection {
    std::size_t checkpoints = 30;
    bool verify_bounds = false;
    std::string evaluate = "averaged";  // "averaged" | "raw"
  };

  struct SweepSection {
    std::vector<double> mu_values = {0.0, 1.0, 4.0, 16.0};
    std::vector<std::uint64_t> seeds;  // required for sweep
  };

  DatasetSection dataset;
  LearnerSection learner;
  ExperimentSection experiment;
  SweepSection sweep;
};

// Parses and schema-validates the config document; throws SchemaError on
// unknown keys or type mismatches.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical JSON echo of the resolved config.
std::string run_config_json(const RunConfig& config);

// Builds the dataset the config describes (generation or file ingestion,
// then noise injection and the feature map, in that order).
Dataset build_dataset(const RunConfig& config);

// Builds the learner config; fills assumptions from the dataset's exported
// constants so derived step sizes are exact on synthetic data.
LearnerConfig build_learner_config(const RunConfig& config, const Dataset& dataset);

ExperimentOptions build_experiment_options(const RunConfig& config);

}  // namespace usgd
