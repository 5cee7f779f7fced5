#include "usgd/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "usgd/errors.hpp"

namespace usgd {

namespace {

constexpr int kZeroMarginRetries = 64;

Vec covariance_sd(const SyntheticSpec& spec) {
  Vec sd(spec.d, 1.0);
  switch (spec.covariance) {
    case Covariance::kIdentity:
      break;
    case Covariance::kDecaying:
      for (std::size_t i = 0; i < spec.d; ++i) sd[i] = std::sqrt(1.0 / static_cast<double>(i + 1));
      break;
    case Covariance::kCustom:
      if (spec.custom_diagonal.size() != spec.d) {
        throw InvalidInputError("SyntheticSpec: custom diagonal length must equal d");
      }
      for (std::size_t i = 0; i < spec.d; ++i) sd[i] = std::sqrt(spec.custom_diagonal[i]);
      break;
  }
  return sd;
}

Vec draw_x(Rng& rng, const Vec& sd) {
  Vec x(sd.size());
  for (std::size_t i = 0; i < sd.size(); ++i) x[i] = rng.normal() * sd[i];
  return x;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (d < 1) throw InvalidInputError("SyntheticSpec: d must be >= 1");
  if (n_train < 1 || n_test < 1) throw InvalidInputError("SyntheticSpec: counts must be >= 1");
  if (k != 0 && k < 2) throw InvalidInputError("SyntheticSpec: k must be 0 (binary) or >= 2");
  if (covariance == Covariance::kCustom) {
    if (custom_diagonal.size() != d) {
      throw InvalidInputError("SyntheticSpec: custom diagonal length must equal d");
    }
    for (double v : custom_diagonal) {
      if (!(v > 0.0)) {
        throw InvalidInputError("SyntheticSpec: covariance diagonal entries must be > 0");
      }
    }
  }
  if (margin_floor.has_value() && !(*margin_floor > 0.0)) {
    throw InvalidInputError("SyntheticSpec: margin_floor must be > 0");
  }
}

Dataset generate_synthetic_binary(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.k != 0) throw InvalidInputError("generate_synthetic_binary: spec.k must be 0");
  Rng rng(spec.seed);
  Vec theta_star(spec.d);
  for (double& v : theta_star) v = rng.normal();
  const Vec sd = covariance_sd(spec);

  Dataset ds;
  ds.d = spec.d;
  ds.k = 0;
  ds.seed = spec.seed;

  auto draw_labeled = [&](std::vector<Sample>& out, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec x;
      double m = 0.0;
      int tries = 0;
      do {
        if (tries++ > kZeroMarginRetries) {
          throw GenerationError("generate_synthetic_binary: sample stuck on the decision"
                                " boundary after retries");
        }
        x = draw_x(rng, sd);
        m = dot(theta_star, x);
      } while (m == 0.0);
      out.push_back(Sample{std::move(x), m > 0.0 ? 1 : -1});
    }
  };
  draw_labeled(ds.train, spec.n_train);
  draw_labeled(ds.test, spec.n_test);

  if (spec.margin_floor.has_value()) {
    double min_margin = std::numeric_limits<double>::infinity();
    for (const Sample& s : ds.train) {
      min_margin = std::min(min_margin, std::abs(dot(theta_star, s.features)));
    }
    scale(theta_star, *spec.margin_floor / min_margin);
  }

  ds.rho_star = std::numeric_limits<double>::infinity();
  ds.R = 0.0;
  for (const Sample& s : ds.train) {
    ds.rho_star = std::min(ds.rho_star,
                           static_cast<double>(*s.label) * dot(theta_star, s.features));
    ds.R = std::max(ds.R, norm(s.features));
  }
  for (const Sample& s : ds.test) ds.R = std::max(ds.R, norm(s.features));
  ds.theta_star_norm = norm(theta_star);
  ds.theta_star.push_back(std::move(theta_star));
  return ds;
}

namespace {

struct TruthScores {
  int label = 0;   // argmax class, lowest index on ties
  double gap = 0.0;  // top score minus runner-up
};

TruthScores truth_label(const std::vector<Vec>& blocks, const Vec& x) {
  int best_c = 0, second_c = 0;
  double best = 0.0, second = 0.0;
  for (std::size_t c = 0; c < blocks.size(); ++c) {
    const double s = dot(blocks[c], x);
    if (best_c == 0 || s > best) {
      second_c = best_c;
      second = best;
      best_c = static_cast<int>(c) + 1;
      best = s;
    } else if (second_c == 0 || s > second) {
      second_c = static_cast<int>(c) + 1;
      second = s;
    }
  }
  return TruthScores{best_c, best - second};
}

}  // namespace

Dataset generate_synthetic_multiclass_with_truth(const SyntheticSpec& spec,
                                                 std::vector<Vec> theta_blocks) {
  spec.validate();
  if (spec.k < 2) throw InvalidInputError("generate_synthetic_multiclass: k must be >= 2");
  if (theta_blocks.size() != static_cast<std::size_t>(spec.k)) {
    throw InvalidInputError("generate_synthetic_multiclass: truth must have k blocks");
  }
  Rng rng(spec.seed);
  // Consume the draws the public generator would use for the truth, so a
  // supplied truth sees the same x stream.
  for (int c = 0; c < spec.k; ++c) {
    for (std::size_t i = 0; i < spec.d; ++i) (void)rng.normal();
  }
  const Vec sd = covariance_sd(spec);

  Dataset ds;
  ds.d = spec.d;
  ds.k = spec.k;
  ds.seed = spec.seed;

  auto draw_labeled = [&](std::vector<Sample>& out, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec x;
      TruthScores ts;
      int tries = 0;
      do {
        if (tries++ > kZeroMarginRetries) {
          throw GenerationError("generate_synthetic_multiclass: zero top-two gap persists"
                                " after retries (degenerate truth?)");
        }
        x = draw_x(rng, sd);
        ts = truth_label(theta_blocks, x);
      } while (ts.gap == 0.0);
      out.push_back(Sample{std::move(x), ts.label});
    }
  };
  draw_labeled(ds.train, spec.n_train);
  draw_labeled(ds.test, spec.n_test);

  if (spec.margin_floor.has_value()) {
    double min_gap = std::numeric_limits<double>::infinity();
    for (const Sample& s : ds.train) {
      min_gap = std::min(min_gap, truth_label(theta_blocks, s.features).gap);
    }
    const double f = *spec.margin_floor / min_gap;
    for (Vec& b : theta_blocks) scale(b, f);
  }

  ds.rho_star = std::numeric_limits<double>::infinity();
  double max_x_norm = 0.0;
  for (const Sample& s : ds.train) {
    ds.rho_star = std::min(ds.rho_star, truth_label(theta_blocks, s.features).gap);
    max_x_norm = std::max(max_x_norm, norm(s.features));
  }
  for (const Sample& s : ds.test) max_x_norm = std::max(max_x_norm, norm(s.features));
  // ||delta_x(i,j)|| = sqrt(2) ||x||, the bound the multiclass statements use.
  ds.R = std::sqrt(2.0) * max_x_norm;
  double sq = 0.0;
  for (const Vec& b : theta_blocks) sq += squared_norm(b);
  ds.theta_star_norm = std::sqrt(sq);
  ds.theta_star = std::move(theta_blocks);
  return ds;
}

Dataset generate_synthetic_multiclass(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.k < 2) throw InvalidInputError("generate_synthetic_multiclass: k must be >= 2");
  Rng rng(spec.seed);
  std::vector<Vec> blocks(static_cast<std::size_t>(spec.k), Vec(spec.d));
  for (Vec& b : blocks) {
    for (double& v : b) v = rng.normal();
  }
  return generate_synthetic_multiclass_with_truth(spec, std::move(blocks));
}

Dataset inject_label_noise(const Dataset& dataset, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw InvalidInputError("inject_label_noise: eta must lie in [0,1]");
  }
  if (dataset.noise_eta > 0.0) {
    throw InvalidInputError("inject_label_noise: dataset already carries injected noise");
  }
  Dataset out = dataset;
  out.noise_eta = eta;
  Rng rng(seed);
  auto corrupt = [&](std::vector<Sample>& samples, std::vector<std::uint8_t>& mask) {
    mask.assign(samples.size(), 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (rng.uniform01() >= eta) continue;
      mask[i] = 1;
      int& y = *samples[i].label;
      if (dataset.k == 0) {
        y = -y;
      } else {
        // Uniform over the k-1 other classes.
        int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(dataset.k - 1))) + 1;
        y = r < y ? r : r + 1;
      }
    }
  };
  corrupt(out.train, out.noise_mask_train);
  corrupt(out.test, out.noise_mask_test);
  return out;
}

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* s = tok.c_str();
  char* end = nullptr;
  out = std::strtod(s, &end);
  return end == s + tok.size() && tok.size() > 0 && std::isfinite(out);
}

ParseError parse_error(const std::string& path, std::size_t line_no, const std::string& what) {
  return ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

LibsvmFile read_libsvm(const std::string& path, const ExpectedLabels& expected) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_libsvm: cannot open " + path);
  LibsvmFile file;
  std::vector<std::vector<std::pair<std::size_t, double>>> sparse;
  std::vector<int> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) {
      throw parse_error(path, line_no, "empty line");
    }
    double raw = 0.0;
    if (!parse_double(tok, raw) || raw != std::floor(raw)) {
      throw parse_error(path, line_no, "label '" + tok + "' is not an integer");
    }
    raw_labels.push_back(static_cast<int>(raw));
    std::vector<std::pair<std::size_t, double>> feats;
    std::size_t prev_idx = 0;
    while (ls >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size()) {
        throw parse_error(path, line_no, "expected idx:val, got '" + tok + "'");
      }
      double idx_d = 0.0, val = 0.0;
      if (!parse_double(tok.substr(0, colon), idx_d) || idx_d != std::floor(idx_d) ||
          idx_d < 1.0) {
        throw parse_error(path, line_no, "bad feature index in '" + tok + "'");
      }
      if (!parse_double(tok.substr(colon + 1), val)) {
        throw parse_error(path, line_no, "bad feature value in '" + tok + "'");
      }
      const std::size_t idx = static_cast<std::size_t>(idx_d);
      if (idx <= prev_idx) {
        throw parse_error(path, line_no, "feature indices must be strictly increasing");
      }
      prev_idx = idx;
      feats.emplace_back(idx, val);
      file.d = std::max(file.d, idx);
    }
    sparse.push_back(std::move(feats));
  }

  // Resolve the label alphabet.
  std::set<int> alphabet(raw_labels.begin(), raw_labels.end());
  auto subset_of = [&](std::initializer_list<int> allowed) {
    return std::all_of(alphabet.begin(), alphabet.end(), [&](int v) {
      return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
    });
  };
  std::vector<int> labels(raw_labels.size());
  if (expected.binary) {
    int lo = 0, hi = 0;
    if (subset_of({-1, 1})) {
      lo = -1;
      hi = 1;
    } else if (subset_of({0, 1})) {
      lo = 0;
      hi = 1;
    } else if (subset_of({1, 2})) {
      lo = 1;
      hi = 2;
    } else {
      throw SchemaError("read_libsvm: label alphabet is not one of {-1,+1}, {0,1}, {1,2}");
    }
    (void)hi;
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      labels[i] = raw_labels[i] == lo ? -1 : 1;
    }
  } else {
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      if (raw_labels[i] < 1 || raw_labels[i] > expected.k) {
        throw SchemaError("read_libsvm: label " + std::to_string(raw_labels[i]) +
                          " outside {1.." + std::to_string(expected.k) + "}");
      }
      labels[i] = raw_labels[i];
    }
  }

  file.samples.reserve(sparse.size());
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    Vec x(file.d, 0.0);
    for (const auto& [idx, val] : sparse[i]) x[idx - 1] = val;
    file.samples.push_back(Sample{std::move(x), labels[i]});
  }
  return file;
}

void write_libsvm(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_libsvm: cannot open " + path + " for writing");
  char buf[64];
  for (const Sample& s : samples) {
    if (!s.label.has_value()) throw InvalidInputError("write_libsvm: sample without label");
    out << *s.label;
    for (std::size_t i = 0; i < s.features.size(); ++i) {
      if (s.features[i] == 0.0) continue;
      std::snprintf(buf, sizeof(buf), " %zu:%.17g", i + 1, s.features[i]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw ParseError("write_libsvm: write failed for " + path);
}

void write_dataset_files(const std::string& dir, const Dataset& dataset) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_libsvm((fs::path(dir) / "train.libsvm").string(), dataset.train);
  write_libsvm((fs::path(dir) / "test.libsvm").string(), dataset.test);
  nlohmann::json meta;
  meta["d"] = dataset.d;
  meta["n"] = dataset.train.size();
  meta["k"] = dataset.k;
  meta["rho_star"] = dataset.rho_star;
  meta["R"] = dataset.R;
  meta["theta_star_norm"] = dataset.theta_star_norm;
  meta["seed"] = dataset.seed;
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw ParseError("write_dataset_files: cannot write metadata.json");
  out << meta.dump(2) << '\n';
}

Vec RffMap::transform(std::span<const double> x) const {
  const std::size_t D = omega.size();
  Vec z(D);
  const double amp = std::sqrt(2.0 / static_cast<double>(D));
  for (std::size_t j = 0; j < D; ++j) {
    z[j] = amp * std::cos(dot(omega[j], x) + b[j]);
  }
  return z;
}

RffMap draw_rff_map(std::size_t d, std::size_t D, double bandwidth, std::uint64_t seed) {
  if (D < 1) throw InvalidInputError("draw_rff_map: D must be >= 1");
  if (!(bandwidth > 0.0)) throw InvalidInputError("draw_rff_map: bandwidth must be > 0");
  Rng rng(seed);
  RffMap map;
  map.omega.assign(D, Vec(d));
  const double inv_bw = 1.0 / bandwidth;
  for (std::size_t j = 0; j < D; ++j) {
    for (std::size_t i = 0; i < d; ++i) map.omega[j][i] = rng.normal() * inv_bw;
  }
  map.b.resize(D);
  for (std::size_t j = 0; j < D; ++j) map.b[j] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  return map;
}

double median_heuristic_bandwidth(const Dataset& dataset) {
  const std::size_t n = std::min<std::size_t>(1000, dataset.train.size());
  if (n < 2) throw InvalidInputError("median_heuristic_bandwidth: need at least 2 samples");
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      const Vec& a = dataset.train[i].features;
      const Vec& b = dataset.train[j].features;
      for (std::size_t l = 0; l < a.size(); ++l) {
        const double diff = a[l] - b[l];
        sq += diff * diff;
      }
      dists.push_back(std::sqrt(sq));
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  if (!(med > 0.0)) {
    throw InvalidInputError("median_heuristic_bandwidth: degenerate (zero) median distance");
  }
  return med;
}

Dataset rff_transform(const Dataset& dataset, std::size_t D, double bandwidth,
                      std::uint64_t seed) {
  const RffMap map = draw_rff_map(dataset.d, D, bandwidth, seed);
  Dataset out;
  out.d = D;
  out.k = dataset.k;
  out.seed = dataset.seed;
  out.noise_eta = dataset.noise_eta;
  out.noise_mask_train = dataset.noise_mask_train;
  out.noise_mask_test = dataset.noise_mask_test;
  out.R = 0.0;
  auto apply = [&](const std::vector<Sample>& in, std::vector<Sample>& dst) {
    dst.reserve(in.size());
    for (const Sample& s : in) {
      Sample t{map.transform(s.features), s.label};
      out.R = std::max(out.R, norm(t.features));
      dst.push_back(std::move(t));
    }
  };
  apply(dataset.train, out.train);
  apply(dataset.test, out.test);
  if (dataset.k >= 2) out.R *= std::sqrt(2.0);
  return out;
}

}  // namespace usgd
