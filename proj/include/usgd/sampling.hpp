#pragma once

#include <cstdint>
#include <span>

#include "usgd/model.hpp"
#include "usgd/rng.hpp"

namespace usgd {

enum class SamplingMode {
  kBinaryMargin,      // sigma = 1 / (1 + mu |theta^T x|)
  kMulticlassTopTwo,  // sigma = 1 / (1 + mu |s1 - s2|)
  kAlways,            // sigma = 1 (vanilla SGD)
};

struct SamplingConfig {
  double mu = 1.0;
  SamplingMode mode = SamplingMode::kBinaryMargin;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// 1 / (1 + mu |theta^T x|); always in (0, 1].
double query_probability_binary(std::span<const double> theta, std::span<const double> x,
                                double mu);

// 1 / (1 + mu |s1 - s2|) with s1, s2 the top-two block scores.
double query_probability_multiclass(const MulticlassModel& model, std::span<const double> x,
                                    double mu);

// Bernoulli query decision; advances the generator deterministically.
bool draw_query(double p, Rng& rng);

struct EnvelopeCheck {
  bool lower_ok = false;
  bool upper_ok = false;
};

// Checks the two-sided envelope on sigma in the binary margin regime
// y theta^T x <= 1:
//   min{1/mu, (rho*-1)/(1+mu)} / (rho* - y theta^T x)
//     <= sigma(theta,x) <= max{1, 1/mu} / (1 - y theta^T x)_+
// The upper side is vacuous (reported true) when the hinge is exactly 0.
EnvelopeCheck lemma1_envelope(std::span<const double> theta, std::span<const double> x, int y,
                              double mu, double rho_star);

// Multiclass analogue on theta^T delta_x(y, y*) <= 1 with ||theta|| <= B
// and ||delta_x|| <= R:
//   min{1/mu, (rho*-1)/(1+mu)} / (rho* - theta^T delta)
//     <= sigma(theta,x) <= (1 + B R) / hinge(x, y, theta)
EnvelopeCheck lemma2_envelope(const MulticlassModel& model, std::span<const double> x, int y,
                              double mu, const MarginAssumptions& assumptions);

}  // namespace usgd
