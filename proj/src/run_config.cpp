#include "usgd/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "usgd/errors.hpp"

namespace usgd {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw SchemaError("config: unknown key '" + where + key + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError("config: field '" + where + key + "' has the wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, std::optional<T>& out,
                   const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError("config: field '" + where + key + "' has the wrong type");
  }
}

// json silently wraps negative integers into unsigned targets; counts and
// seeds go through here instead.
void check_non_negative(const json& value, const char* key, const std::string& where) {
  if (!value.is_number_integer() && !value.is_number_unsigned()) {
    throw SchemaError("config: field '" + where + key + "' must be an integer");
  }
  if (value.is_number_integer() && !value.is_number_unsigned() &&
      value.get<std::int64_t>() < 0) {
    throw SchemaError("config: field '" + where + key + "' must be non-negative");
  }
}

template <typename T>
void read_count(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  check_non_negative(*it, key, where);
  out = it->get<T>();
}

void read_optional_count(const json& obj, const char* key, std::optional<std::uint64_t>& out,
                         const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  check_non_negative(*it, key, where);
  out = it->get<std::uint64_t>();
}

void read_count_list(const json& obj, const char* key, std::vector<std::uint64_t>& out,
                     const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array()) {
    throw SchemaError("config: field '" + where + key + "' must be an array");
  }
  out.clear();
  for (const json& v : *it) {
    check_non_negative(v, key, where);
    out.push_back(v.get<std::uint64_t>());
  }
}

void require_one_of(const std::string& value, std::initializer_list<const char*> allowed,
                    const std::string& field) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  throw SchemaError("config: field '" + field + "' has unsupported value '" + value + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw SchemaError("config: top level must be an object");
  reject_unknown_keys(root, "", {"dataset", "learner", "experiment", "sweep"});

  RunConfig cfg;
  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    if (!d.is_object()) throw SchemaError("config: 'dataset' must be an object");
    reject_unknown_keys(d, "dataset.",
                        {"kind", "task", "k", "d", "n_train", "n_test", "covariance",
                         "covariance_diagonal", "margin_floor", "seed", "train_path",
                         "test_path", "metadata_path", "noise_eta", "noise_seed", "rff"});
    auto& out = cfg.dataset;
    read_field(d, "kind", out.kind, "dataset.");
    read_field(d, "task", out.task, "dataset.");
    read_field(d, "k", out.k, "dataset.");
    read_count(d, "d", out.d, "dataset.");
    read_count(d, "n_train", out.n_train, "dataset.");
    read_count(d, "n_test", out.n_test, "dataset.");
    read_field(d, "covariance", out.covariance, "dataset.");
    read_field(d, "covariance_diagonal", out.covariance_diagonal, "dataset.");
    read_optional(d, "margin_floor", out.margin_floor, "dataset.");
    read_optional_count(d, "seed", out.seed, "dataset.");
    read_field(d, "train_path", out.train_path, "dataset.");
    read_field(d, "test_path", out.test_path, "dataset.");
    read_field(d, "metadata_path", out.metadata_path, "dataset.");
    read_field(d, "noise_eta", out.noise_eta, "dataset.");
    read_optional_count(d, "noise_seed", out.noise_seed, "dataset.");
    if (d.contains("rff") && !d["rff"].is_null()) {
      const json& r = d["rff"];
      if (!r.is_object()) throw SchemaError("config: 'dataset.rff' must be an object or null");
      reject_unknown_keys(r, "dataset.rff.", {"D", "bandwidth", "seed"});
      out.rff_enabled = true;
      read_count(r, "D", out.rff_D, "dataset.rff.");
      read_field(r, "bandwidth", out.rff_bandwidth, "dataset.rff.");
      read_optional_count(r, "seed", out.rff_seed, "dataset.rff.");
    }
    require_one_of(out.kind, {"synthetic", "libsvm"}, "dataset.kind");
    require_one_of(out.task, {"binary", "multiclass"}, "dataset.task");
    require_one_of(out.covariance, {"identity", "decaying", "custom"}, "dataset.covariance");
  }

  if (root.contains("learner")) {
    const json& l = root["learner"];
    if (!l.is_object()) throw SchemaError("config: 'learner' must be an object");
    reject_unknown_keys(l, "learner.",
                        {"gamma", "mu", "sampling", "regime", "projection",
                         "multiclass_halved_step", "seed"});
    auto& out = cfg.learner;
    if (l.contains("gamma")) {
      const json& g = l["gamma"];
      if (g.is_string()) {
        if (g.get<std::string>() != "derive") {
          throw SchemaError("config: learner.gamma must be a number or \"derive\"");
        }
        out.gamma.reset();
      } else if (g.is_number()) {
        out.gamma = g.get<double>();
      } else {
        throw SchemaError("config: learner.gamma must be a number or \"derive\"");
      }
    }
    read_field(l, "mu", out.mu, "learner.");
    read_field(l, "sampling", out.sampling, "learner.");
    read_field(l, "regime", out.regime, "learner.");
    if (l.contains("projection")) {
      const json& p = l["projection"];
      if (p.is_null()) {
        out.projection.reset();
      } else if (p.is_string() && p.get<std::string>() == "2x-theta-star") {
        out.projection_two_theta_star = true;
      } else if (p.is_number()) {
        out.projection = p.get<double>();
      } else {
        throw SchemaError("config: learner.projection must be a number, \"2x-theta-star\""
                          " or null");
      }
    }
    read_field(l, "multiclass_halved_step", out.multiclass_halved_step, "learner.");
    read_optional_count(l, "seed", out.seed, "learner.");
    require_one_of(out.sampling, {"margin", "always"}, "learner.sampling");
    require_one_of(out.regime, {"separable", "noisy-low", "noisy-high"}, "learner.regime");
  }

  if (root.contains("experiment")) {
    const json& e = root["experiment"];
    if (!e.is_object()) throw SchemaError("config: 'experiment' must be an object");
    reject_unknown_keys(e, "experiment.", {"checkpoints", "verify_bounds", "evaluate"});
    auto& out = cfg.experiment;
    read_count(e, "checkpoints", out.checkpoints, "experiment.");
    read_field(e, "verify_bounds", out.verify_bounds, "experiment.");
    read_field(e, "evaluate", out.evaluate, "experiment.");
    require_one_of(out.evaluate, {"averaged", "raw"}, "experiment.evaluate");
  }

  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    if (!s.is_object()) throw SchemaError("config: 'sweep' must be an object");
    reject_unknown_keys(s, "sweep.", {"mu_values", "seeds"});
    read_field(s, "mu_values", cfg.sweep.mu_values, "sweep.");
    read_count_list(s, "seeds", cfg.sweep.seeds, "sweep.");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_json(const RunConfig& cfg) {
  json root;
  json& d = root["dataset"];
  d["kind"] = cfg.dataset.kind;
  d["task"] = cfg.dataset.task;
  d["k"] = cfg.dataset.k;
  d["d"] = cfg.dataset.d;
  d["n_train"] = cfg.dataset.n_train;
  d["n_test"] = cfg.dataset.n_test;
  d["covariance"] = cfg.dataset.covariance;
  if (!cfg.dataset.covariance_diagonal.empty()) {
    d["covariance_diagonal"] = cfg.dataset.covariance_diagonal;
  }
  if (cfg.dataset.margin_floor.has_value()) {
    d["margin_floor"] = *cfg.dataset.margin_floor;
  } else {
    d["margin_floor"] = nullptr;
  }
  if (cfg.dataset.seed.has_value()) d["seed"] = *cfg.dataset.seed;
  if (!cfg.dataset.train_path.empty()) d["train_path"] = cfg.dataset.train_path;
  if (!cfg.dataset.test_path.empty()) d["test_path"] = cfg.dataset.test_path;
  if (!cfg.dataset.metadata_path.empty()) d["metadata_path"] = cfg.dataset.metadata_path;
  d["noise_eta"] = cfg.dataset.noise_eta;
  if (cfg.dataset.noise_seed.has_value()) d["noise_seed"] = *cfg.dataset.noise_seed;
  if (cfg.dataset.rff_enabled) {
    json r;
    r["D"] = cfg.dataset.rff_D;
    r["bandwidth"] = cfg.dataset.rff_bandwidth;
    if (cfg.dataset.rff_seed.has_value()) r["seed"] = *cfg.dataset.rff_seed;
    d["rff"] = r;
  }

  json& l = root["learner"];
  if (cfg.learner.gamma.has_value()) {
    l["gamma"] = *cfg.learner.gamma;
  } else {
    l["gamma"] = "derive";
  }
  l["mu"] = cfg.learner.mu;
  l["sampling"] = cfg.learner.sampling;
  l["regime"] = cfg.learner.regime;
  if (cfg.learner.projection_two_theta_star) {
    l["projection"] = "2x-theta-star";
  } else if (cfg.learner.projection.has_value()) {
    l["projection"] = *cfg.learner.projection;
  } else {
    l["projection"] = nullptr;
  }
  l["multiclass_halved_step"] = cfg.learner.multiclass_halved_step;
  if (cfg.learner.seed.has_value()) l["seed"] = *cfg.learner.seed;

  json& e = root["experiment"];
  e["checkpoints"] = cfg.experiment.checkpoints;
  e["verify_bounds"] = cfg.experiment.verify_bounds;
  e["evaluate"] = cfg.experiment.evaluate;

  json& s = root["sweep"];
  s["mu_values"] = cfg.sweep.mu_values;
  s["seeds"] = cfg.sweep.seeds;
  return root.dump(2);
}

Dataset build_dataset(const RunConfig& cfg) {
  const auto& dc = cfg.dataset;
  if (dc.task == "multiclass" && dc.k < 2) {
    throw SchemaError("config: dataset.k must be >= 2 for the multiclass task");
  }
  Dataset ds;
  if (dc.kind == "synthetic") {
    if (!dc.seed.has_value()) {
      throw SchemaError("config: dataset.seed is required for synthetic data");
    }
    SyntheticSpec spec;
    spec.d = dc.d;
    spec.n_train = dc.n_train;
    spec.n_test = dc.n_test;
    spec.seed = *dc.seed;
    spec.margin_floor = dc.margin_floor;
    if (dc.covariance == "identity") {
      spec.covariance = Covariance::kIdentity;
    } else if (dc.covariance == "decaying") {
      spec.covariance = Covariance::kDecaying;
    } else {
      spec.covariance = Covariance::kCustom;
      spec.custom_diagonal = dc.covariance_diagonal;
    }
    if (dc.task == "binary") {
      spec.k = 0;
      ds = generate_synthetic_binary(spec);
    } else {
      spec.k = dc.k;
      ds = generate_synthetic_multiclass(spec);
    }
  } else {
    if (dc.train_path.empty() || dc.test_path.empty()) {
      throw SchemaError("config: libsvm datasets need train_path and test_path");
    }
    ExpectedLabels labels;
    if (dc.task == "binary") {
      labels.binary = true;
    } else {
      labels.binary = false;
      labels.k = dc.k;
    }
    LibsvmFile train = read_libsvm(dc.train_path, labels);
    LibsvmFile test = read_libsvm(dc.test_path, labels);
    ds.d = std::max(train.d, test.d);
    for (Sample& s : train.samples) s.features.resize(ds.d, 0.0);
    for (Sample& s : test.samples) s.features.resize(ds.d, 0.0);
    ds.k = dc.task == "binary" ? 0 : dc.k;
    ds.train = std::move(train.samples);
    ds.test = std::move(test.samples);
    if (!dc.metadata_path.empty()) {
      std::ifstream in(dc.metadata_path);
      if (!in) throw SchemaError("config: cannot open metadata " + dc.metadata_path);
      nlohmann::json meta;
      try {
        in >> meta;
        ds.rho_star = meta.at("rho_star").get<double>();
        ds.R = meta.at("R").get<double>();
        ds.theta_star_norm = meta.at("theta_star_norm").get<double>();
        ds.seed = meta.at("seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("config: bad metadata sidecar: ") + e.what());
      }
    }
  }

  if (dc.noise_eta > 0.0) {
    if (!dc.noise_seed.has_value()) {
      throw SchemaError("config: dataset.noise_seed is required when noise_eta > 0");
    }
    ds = inject_label_noise(ds, dc.noise_eta, *dc.noise_seed);
  }
  if (dc.rff_enabled) {
    if (!dc.rff_seed.has_value()) {
      throw SchemaError("config: dataset.rff.seed is required");
    }
    const double bw =
        dc.rff_bandwidth > 0.0 ? dc.rff_bandwidth : median_heuristic_bandwidth(ds);
    ds = rff_transform(ds, dc.rff_D, bw, *dc.rff_seed);
  }
  return ds;
}

LearnerConfig build_learner_config(const RunConfig& cfg, const Dataset& dataset) {
  const auto& lc = cfg.learner;
  if (!lc.seed.has_value()) throw SchemaError("config: learner.seed is required");
  LearnerConfig out;
  out.gamma = lc.gamma;
  out.sampling.mu = lc.mu;
  out.sampling.rng_seed = *lc.seed;
  if (lc.sampling == "always") {
    out.sampling.mode = SamplingMode::kAlways;
  } else {
    out.sampling.mode = dataset.k == 0 ? SamplingMode::kBinaryMargin
                                       : SamplingMode::kMulticlassTopTwo;
  }
  if (lc.regime == "separable") {
    out.regime = Regime::kSeparable;
  } else if (lc.regime == "noisy-low") {
    out.regime = Regime::kNoisyLow;
  } else {
    out.regime = Regime::kNoisyHigh;
  }
  out.multiclass_halved_step = lc.multiclass_halved_step;

  if (lc.projection_two_theta_star) {
    if (!std::isfinite(dataset.theta_star_norm)) {
      throw SchemaError("config: projection \"2x-theta-star\" needs a dataset with exact"
                        " constants");
    }
    out.projection = 2.0 * dataset.theta_star_norm;
  } else {
    out.projection = lc.projection;
  }
  if (dataset.k >= 2 && !out.projection.has_value()) {
    throw SchemaError("config: multiclass training needs learner.projection");
  }

  // Assumptions back the derived step sizes and the bound verification;
  // they are exact on synthetic data and absent otherwise.
  if (std::isfinite(dataset.rho_star) && dataset.rho_star > 1.0) {
    MarginAssumptions a;
    a.rho_star = dataset.rho_star;
    a.R = dataset.R;
    a.eta = dataset.noise_eta;
    a.theta_star_norm = std::isfinite(dataset.theta_star_norm)
                            ? std::optional<double>(dataset.theta_star_norm)
                            : std::nullopt;
    a.B = out.projection;
    out.assumptions = a;
  }
  if (!out.gamma.has_value() && !out.assumptions.has_value()) {
    throw SchemaError("config: learner.gamma=\"derive\" needs a dataset with exact margin"
                      " constants (synthetic, or a metadata sidecar with rho_star > 1);"
                      " set a numeric gamma instead");
  }
  return out;
}

ExperimentOptions build_experiment_options(const RunConfig& cfg) {
  ExperimentOptions opts;
  opts.checkpoint_count = cfg.experiment.checkpoints;
  opts.verify_bounds = cfg.experiment.verify_bounds;
  opts.evaluate_averaged = cfg.experiment.evaluate == "averaged";
  return opts;
}

}  // namespace usgd
