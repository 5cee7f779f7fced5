#include "usgd/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "usgd/errors.hpp"

namespace usgd {

MulticlassModel::MulticlassModel(std::size_t k, std::size_t d, double projection_radius)
    : theta(k, Vec(d, 0.0)), theta_bar(k, Vec(d, 0.0)), B(projection_radius) {
  if (k < 2) throw InvalidInputError("MulticlassModel: need k >= 2 classes");
  if (!(projection_radius > 0.0)) {
    throw InvalidInputError("MulticlassModel: projection radius must be > 0");
  }
}

double MulticlassModel::concat_squared_norm() const {
  double s = 0.0;
  for (const Vec& b : theta) s += squared_norm(b);
  return s;
}

double MulticlassModel::concat_norm() const { return std::sqrt(concat_squared_norm()); }

void MarginAssumptions::validate() const {
  if (!(rho_star > 1.0)) {
    throw InvalidInputError("MarginAssumptions: rho_star must be > 1, got " +
                            std::to_string(rho_star));
  }
  if (!(R > 0.0)) throw InvalidInputError("MarginAssumptions: R must be > 0");
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw InvalidInputError("MarginAssumptions: eta must lie in [0,1]");
  }
  if (B.has_value() && !(*B > 0.0)) {
    throw InvalidInputError("MarginAssumptions: B must be > 0 when present");
  }
  if (theta_star_norm.has_value() && !(*theta_star_norm >= 0.0)) {
    throw InvalidInputError("MarginAssumptions: theta_star_norm must be >= 0");
  }
}

double score_binary(const BinaryModel& model, std::span<const double> x) {
  return dot(model.theta, x);
}

static void require_binary_label(int y) {
  if (y != -1 && y != 1) {
    throw InvalidInputError("binary label must be -1 or +1, got " + std::to_string(y));
  }
}

double hinge_binary(std::span<const double> x, int y, std::span<const double> theta) {
  require_binary_label(y);
  const double m = static_cast<double>(y) * dot(theta, x);
  return m >= 1.0 ? 0.0 : 1.0 - m;
}

double squared_hinge_binary(std::span<const double> x, int y, std::span<const double> theta) {
  const double h = hinge_binary(x, y, theta);
  return 0.5 * h * h;
}

static void require_class(int y, int k, const char* where) {
  if (y < 1 || y > k) {
    throw InvalidInputError(std::string(where) + ": class " + std::to_string(y) +
                            " outside [1," + std::to_string(k) + "]");
  }
}

Vec delta_x(std::span<const double> x, int y, int y_prime, int k) {
  require_class(y, k, "delta_x");
  require_class(y_prime, k, "delta_x");
  if (y == y_prime) throw InvalidInputError("delta_x: y and y_prime must differ");
  const std::size_t d = x.size();
  Vec out(static_cast<std::size_t>(k) * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    out[(static_cast<std::size_t>(y) - 1) * d + i] = x[i];
    out[(static_cast<std::size_t>(y_prime) - 1) * d + i] = -x[i];
  }
  return out;
}

double block_score(const MulticlassModel& model, int cls, std::span<const double> x) {
  require_class(cls, static_cast<int>(model.num_classes()), "block_score");
  return dot(model.theta[static_cast<std::size_t>(cls) - 1], x);
}

TopTwo top_two_scores(const MulticlassModel& model, std::span<const double> x) {
  const int k = static_cast<int>(model.num_classes());
  if (k < 2) throw InvalidInputError("top_two_scores: need k >= 2");
  TopTwo r;
  for (int c = 1; c <= k; ++c) {
    const double s = dot(model.theta[static_cast<std::size_t>(c) - 1], x);
    if (r.best == 0 || s > r.best_score) {
      r.second = r.best;
      r.second_score = r.best_score;
      r.best = c;
      r.best_score = s;
    } else if (r.second == 0 || s > r.second_score) {
      r.second = c;
      r.second_score = s;
    }
  }
  return r;
}

int best_competitor(const MulticlassModel& model, std::span<const double> x, int y) {
  const int k = static_cast<int>(model.num_classes());
  require_class(y, k, "best_competitor");
  int best = 0;
  double best_score = 0.0;
  for (int c = 1; c <= k; ++c) {
    if (c == y) continue;
    const double s = dot(model.theta[static_cast<std::size_t>(c) - 1], x);
    if (best == 0 || s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

double hinge_multiclass(std::span<const double> x, int y, const MulticlassModel& model) {
  const int y_star = best_competitor(model, x, y);
  const double margin = block_score(model, y, x) - block_score(model, y_star, x);
  return margin >= 1.0 ? 0.0 : 1.0 - margin;
}

// Rescaling by B/n can leave the norm one rounding step above B; repeat
// (with a nudge after two tries) until the result actually satisfies the
// radius check, which makes a second projection the identity bit for bit.
void project_to_ball(Vec& theta, double B) {
  if (!(B > 0.0)) throw InvalidInputError("project_to_ball: B must be > 0");
  for (int iter = 0; iter < 8; ++iter) {
    const double n = norm(theta);
    if (!(n > B)) return;
    double f = B / n;
    if (iter >= 2) f *= 1.0 - 8.0 * std::numeric_limits<double>::epsilon();
    scale(theta, f);
  }
}

void project_to_ball(std::vector<Vec>& blocks, double B) {
  if (!(B > 0.0)) throw InvalidInputError("project_to_ball: B must be > 0");
  for (int iter = 0; iter < 8; ++iter) {
    double sq = 0.0;
    for (const Vec& b : blocks) sq += squared_norm(b);
    const double n = std::sqrt(sq);
    if (!(n > B)) return;
    double f = B / n;
    if (iter >= 2) f *= 1.0 - 8.0 * std::numeric_limits<double>::epsilon();
    for (Vec& b : blocks) scale(b, f);
  }
}

}  // namespace usgd
