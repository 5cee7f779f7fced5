#include "usgd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usgd/errors.hpp"

namespace usgd {

void SamplingConfig::validate() const {
  if (!(mu >= 0.0)) throw InvalidInputError("SamplingConfig: mu must be >= 0");
}

static double sigma_of_gap(double gap, double mu) {
  if (!std::isfinite(gap)) throw InvalidInputError("query probability: non-finite score");
  if (!(mu >= 0.0)) throw InvalidInputError("query probability: mu must be >= 0");
  return 1.0 / (1.0 + mu * std::abs(gap));
}

double query_probability_binary(std::span<const double> theta, std::span<const double> x,
                                double mu) {
  return sigma_of_gap(dot(theta, x), mu);
}

double query_probability_multiclass(const MulticlassModel& model, std::span<const double> x,
                                    double mu) {
  const TopTwo tt = top_two_scores(model, x);
  return sigma_of_gap(tt.best_score - tt.second_score, mu);
}

bool draw_query(double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidInputError("draw_query: p must lie in [0,1], got " + std::to_string(p));
  }
  return rng.bernoulli(p);
}

// One relative ulp-scale of slack so boundary cases of the exact real
// inequalities do not flip on rounding.
static constexpr double kSlack = 1e-12;

static bool leq_with_slack(double lhs, double rhs) {
  return lhs <= rhs + kSlack * (std::abs(lhs) + std::abs(rhs)) + 1e-300;
}

EnvelopeCheck lemma1_envelope(std::span<const double> theta, std::span<const double> x, int y,
                              double mu, double rho_star) {
  if (y != -1 && y != 1) throw InvalidInputError("lemma1_envelope: label must be -1 or +1");
  if (!(mu > 0.0)) throw InvalidInputError("lemma1_envelope: mu must be > 0");
  if (!(rho_star > 1.0)) throw InvalidInputError("lemma1_envelope: rho_star must be > 1");
  const double score = dot(theta, x);
  const double margin = static_cast<double>(y) * score;
  if (margin > 1.0) {
    throw PreconditionError("lemma1_envelope: y theta^T x > 1 is outside the bound's regime");
  }
  const double sigma = sigma_of_gap(score, mu);
  const double c2 = std::min(1.0 / mu, (rho_star - 1.0) / (1.0 + mu));
  const double c1 = std::max(1.0, 1.0 / mu);
  EnvelopeCheck r;
  r.lower_ok = leq_with_slack(c2 / (rho_star - margin), sigma);
  const double hinge = 1.0 - margin;  // > 0 unless margin == 1 exactly
  r.upper_ok = hinge <= 0.0 || leq_with_slack(sigma, c1 / hinge);
  return r;
}

EnvelopeCheck lemma2_envelope(const MulticlassModel& model, std::span<const double> x, int y,
                              double mu, const MarginAssumptions& assumptions) {
  assumptions.validate();
  if (!(mu > 0.0)) throw InvalidInputError("lemma2_envelope: mu must be > 0");
  if (!assumptions.B.has_value()) {
    throw InvalidInputError("lemma2_envelope: assumptions must carry B");
  }
  const double B = *assumptions.B;
  const double R = assumptions.R;
  if (!leq_with_slack(model.concat_norm(), B)) {
    throw PreconditionError("lemma2_envelope: ||theta|| exceeds B");
  }
  if (!leq_with_slack(std::sqrt(2.0) * norm(x), R)) {
    throw PreconditionError("lemma2_envelope: ||delta_x|| exceeds R");
  }
  const int y_star = best_competitor(model, x, y);
  const double margin = block_score(model, y, x) - block_score(model, y_star, x);
  if (margin > 1.0) {
    throw PreconditionError("lemma2_envelope: theta^T delta_x > 1 is outside the bound's regime");
  }
  const double sigma = query_probability_multiclass(model, x, mu);
  const double c2 = std::min(1.0 / mu, (assumptions.rho_star - 1.0) / (1.0 + mu));
  EnvelopeCheck r;
  r.lower_ok = leq_with_slack(c2 / (assumptions.rho_star - margin), sigma);
  const double hinge = 1.0 - margin;
  r.upper_ok = hinge <= 0.0 || leq_with_slack(sigma, (1.0 + B * R) / hinge);
  return r;
}

}  // namespace usgd
