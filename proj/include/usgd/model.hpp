#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "usgd/vec.hpp"

namespace usgd {

// One element of the stream: a feature vector plus an optional class tag.
// Binary labels live in {-1,+1}; multiclass labels in {1..k}.
struct Sample {
  Vec features;
  std::optional<int> label;
};

// Binary linear model state: current parameter, running average of the
// iterates, step counter and cumulative label-query count.
struct BinaryModel {
  Vec theta;
  Vec theta_bar;
  std::uint64_t t = 0;
  std::uint64_t queries = 0;

  explicit BinaryModel(std::size_t d) : theta(d, 0.0), theta_bar(d, 0.0) {}
  std::size_t dim() const { return theta.size(); }
};

// Multiclass model: k parameter blocks of dimension d each, treated as one
// concatenated vector for norms and projection.
struct MulticlassModel {
  std::vector<Vec> theta;      // theta[i] is the block for class i+1
  std::vector<Vec> theta_bar;
  std::uint64_t t = 0;
  std::uint64_t queries = 0;
  double B = 0.0;              // projection radius, > 0

  MulticlassModel(std::size_t k, std::size_t d, double projection_radius);
  std::size_t num_classes() const { return theta.size(); }
  std::size_t dim() const { return theta.empty() ? 0 : theta.front().size(); }
  double concat_squared_norm() const;
  double concat_norm() const;
};

// The constants the convergence statements are parameterized by.
struct MarginAssumptions {
  double rho_star = 0.0;                      // margin floor, > 1
  double R = 0.0;                             // feature / delta-norm bound, > 0
  std::optional<double> B;                    // parameter-ball radius, > 0 when present
  double eta = 0.0;                           // label-noise level in [0,1]
  std::optional<double> theta_star_norm;      // needed by the noisy step sizes

  void validate() const;
};

// theta^T x with the current (non-averaged) parameter.
double score_binary(const BinaryModel& model, std::span<const double> x);

// max(0, 1 - y theta^T x); y must be -1 or +1.
double hinge_binary(std::span<const double> x, int y, std::span<const double> theta);

// (1/2) * hinge^2, the smooth loss the updates descend.
double squared_hinge_binary(std::span<const double> x, int y, std::span<const double> theta);

// phi(x,y) - phi(x,y_prime): block y holds x, block y_prime holds -x,
// the other k-2 blocks are zero. Classes are 1-based; y != y_prime.
Vec delta_x(std::span<const double> x, int y, int y_prime, int k);

double block_score(const MulticlassModel& model, int cls, std::span<const double> x);

struct TopTwo {
  int best = 0;
  double best_score = 0.0;
  int second = 0;
  double second_score = 0.0;
};

// Top two classes by score; ties break toward the lowest class index.
TopTwo top_two_scores(const MulticlassModel& model, std::span<const double> x);

// argmax over classes != y of the block score (lowest index wins ties).
int best_competitor(const MulticlassModel& model, std::span<const double> x, int y);

// [1 - theta^T delta_x(y, y_star)]_+ with y_star the best competitor.
double hinge_multiclass(std::span<const double> x, int y, const MulticlassModel& model);

// Euclidean projection onto the ball of radius B, in place.
void project_to_ball(Vec& theta, double B);
void project_to_ball(std::vector<Vec>& blocks, double B);

}  // namespace usgd
