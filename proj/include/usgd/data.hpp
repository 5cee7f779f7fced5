#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "usgd/model.hpp"
#include "usgd/rng.hpp"

namespace usgd {

enum class Covariance { kIdentity, kDecaying, kCustom };

struct SyntheticSpec {
  std::size_t d = 20;
  std::size_t n_train = 20000;
  std::size_t n_test = 15000;
  Covariance covariance = Covariance::kDecaying;  // decaying: Sigma_ii = 1/i
  Vec custom_diagonal;                            // used when covariance == kCustom
  std::uint64_t seed = 0;
  // When set, the generator rescales theta* so the minimum realized margin
  // over the training set equals this value.
  std::optional<double> margin_floor;
  int k = 0;  // 0 => binary with labels in {-1,+1}; >= 2 => multiclass {1..k}

  void validate() const;
};

// A generated or loaded dataset. Labels ride along inside the samples but
// the training path only ever reads them through a LabelOracle.
struct Dataset {
  std::size_t d = 0;
  int k = 0;  // 0 => binary
  std::vector<Sample> train;
  std::vector<Sample> test;

  // Generator-private truth; empty for file-loaded data.
  std::vector<Vec> theta_star;  // one block for binary, k blocks for multiclass

  // Exported constants. rho_star is the exact minimum margin over the
  // training set; R bounds ||x|| (binary) or ||delta_x|| (multiclass) over
  // every generated sample.
  double rho_star = std::numeric_limits<double>::quiet_NaN();
  double R = std::numeric_limits<double>::quiet_NaN();
  double theta_star_norm = std::numeric_limits<double>::quiet_NaN();

  std::uint64_t seed = 0;
  double noise_eta = 0.0;
  std::vector<std::uint8_t> noise_mask_train;
  std::vector<std::uint8_t> noise_mask_test;

  bool has_truth() const { return !theta_star.empty(); }
};

Dataset generate_synthetic_binary(const SyntheticSpec& spec);
Dataset generate_synthetic_multiclass(const SyntheticSpec& spec);

// Generation with the truth supplied instead of drawn; the public
// generators call this after drawing theta*. Exposed so degenerate truths
// (all blocks equal, zero margins everywhere) can be exercised directly.
Dataset generate_synthetic_multiclass_with_truth(const SyntheticSpec& spec,
                                                 std::vector<Vec> theta_blocks);

// Independently flips each label with probability eta (binary: sign flip;
// multiclass: uniform over the other k-1 classes) and records the mask.
Dataset inject_label_noise(const Dataset& dataset, double eta, std::uint64_t seed);

struct ExpectedLabels {
  bool binary = true;  // labels map to {-1,+1}
  int k = 0;           // when !binary, labels must lie in {1..k}
};

struct LibsvmFile {
  std::vector<Sample> samples;
  std::size_t d = 0;  // max feature index seen
};

// Reads "label idx:val idx:val ..." lines with 1-based strictly increasing
// indices and densifies to the max index. Binary label alphabets {-1,+1},
// {0,1} and {1,2} are accepted; the smaller raw label maps to -1.
LibsvmFile read_libsvm(const std::string& path, const ExpectedLabels& expected);

void write_libsvm(const std::string& path, const std::vector<Sample>& samples);

// train.libsvm + test.libsvm + metadata.json under dir.
void write_dataset_files(const std::string& dir, const Dataset& dataset);

// Explicit random Fourier feature map approximating the Gaussian kernel
// exp(-||x-x'||^2 / (2 bandwidth^2)).
struct RffMap {
  std::vector<Vec> omega;  // D rows of dimension d
  Vec b;                   // D phases in [0, 2*pi)
  std::size_t feature_count() const { return omega.size(); }

  Vec transform(std::span<const double> x) const;
};

RffMap draw_rff_map(std::size_t d, std::size_t D, double bandwidth, std::uint64_t seed);

// Median pairwise distance over the first min(1000, n) training samples.
double median_heuristic_bandwidth(const Dataset& dataset);

// Applies one shared map to train and test. The result has no usable
// margin constants (rho_star and theta_star_norm become NaN); R is
// recomputed on the transformed features.
Dataset rff_transform(const Dataset& dataset, std::size_t D, double bandwidth,
                      std::uint64_t seed);

}  // namespace usgd
