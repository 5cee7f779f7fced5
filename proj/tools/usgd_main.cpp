// usgd: streaming uncertainty-sampling experiments for linear classifiers.
//
// Subcommands: generate | run | sweep. Each takes a JSON config and an
// output directory and writes only inside that directory. Exit codes:
// 0 success, 1 bound violation, 2 usage/validation error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "usgd/errors.hpp"
#include "usgd/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  unsigned parallelism = 0;  // 0 => machine parallelism
};

void emit_error(const std::string& category, const std::string& message) {
  json err;
  err["error"] = category;
  err["message"] = message;
  std::fprintf(stderr, "%s\n", err.dump().c_str());
}

// Flag > file > default. --seed S pins every seed the config left to its
// own devices: dataset S, noise S+1, feature map S+2, learner S+3.
void apply_overrides(usgd::RunConfig& cfg, const GlobalFlags& flags) {
  if (flags.seed.has_value()) {
    const std::uint64_t s = *flags.seed;
    cfg.dataset.seed = s;
    cfg.dataset.noise_seed = s + 1;
    cfg.dataset.rff_seed = s + 2;
    cfg.learner.seed = s + 3;
    if (cfg.sweep.seeds.empty()) cfg.sweep.seeds = {s + 3};
  }
}

unsigned resolve_parallelism(const GlobalFlags& flags) {
  if (flags.deterministic) return 1;
  if (flags.parallelism > 0) return flags.parallelism;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw usgd::ParseError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw usgd::ParseError("write failed for " + path.string());
}

int cmd_generate(const GlobalFlags& flags) {
  usgd::RunConfig cfg = usgd::load_run_config(flags.config_path);
  apply_overrides(cfg, flags);
  const usgd::Dataset ds = usgd::build_dataset(cfg);
  usgd::write_dataset_files(flags.out_dir, ds);
  std::printf("wrote %s/{train.libsvm,test.libsvm,metadata.json}\n", flags.out_dir.c_str());
  std::printf("n_train=%zu n_test=%zu d=%zu k=%d\n", ds.train.size(), ds.test.size(), ds.d,
              ds.k);
  std::printf("rho_star=%.12g R=%.12g theta_star_norm=%.12g\n", ds.rho_star, ds.R,
              ds.theta_star_norm);
  return 0;
}

json summary_common(const usgd::RunConfig& cfg) {
  json s;
  s["config"] = json::parse(usgd::run_config_json(cfg));
  return s;
}

int cmd_run(const GlobalFlags& flags) {
  usgd::RunConfig cfg = usgd::load_run_config(flags.config_path);
  apply_overrides(cfg, flags);
  const usgd::Dataset ds = usgd::build_dataset(cfg);
  const usgd::LearnerConfig learner = usgd::build_learner_config(cfg, ds);
  const usgd::ExperimentOptions opts = usgd::build_experiment_options(cfg);
  const usgd::ExperimentTrace trace = usgd::run_experiment(ds, learner, opts);

  fs::create_directories(flags.out_dir);
  write_file(fs::path(flags.out_dir) / "trace.csv", usgd::trace_csv(trace));

  json summary = summary_common(cfg);
  summary["gamma"] = trace.gamma;
  summary["mu"] = trace.mu;
  const usgd::CheckpointRow& last = trace.rows.back();
  summary["final"] = {{"t", last.t},
                      {"queries", last.queries},
                      {"query_fraction",
                       static_cast<double>(last.queries) / static_cast<double>(last.t)},
                      {"sigma_sum", last.sigma_sum},
                      {"test_error", last.test_error},
                      {"mean_hinge", last.mean_hinge},
                      {"mean_sq_hinge", last.mean_sq_hinge}};
  summary["bounds"] = {{"verified", opts.verify_bounds},
                       {"all_ok", trace.all_bounds_ok}};

  // Log-log rate of the averaged iterate's hinge over the second half of
  // the checkpoint schedule.
  {
    std::vector<std::uint64_t> ts;
    std::vector<double> hs;
    const std::size_t half = trace.rows.size() / 2;
    for (std::size_t i = half; i < trace.rows.size(); ++i) {
      ts.push_back(trace.rows[i].t);
      hs.push_back(trace.rows[i].mean_hinge);
    }
    try {
      const usgd::RateFit fit = usgd::fit_rate(ts, hs);
      summary["rate"] = {{"mean_hinge_slope", fit.slope}};
      if (fit.first_zero_index.has_value()) {
        summary["rate"]["first_zero_checkpoint"] = ts[*fit.first_zero_index];
      }
    } catch (const usgd::InsufficientDataError& e) {
      summary["rate"] = {{"unavailable", e.what()}};
    }
  }
  write_file(fs::path(flags.out_dir) / "summary.json", summary.dump(2) + "\n");

  if (opts.verify_bounds && !trace.all_bounds_ok) {
    emit_error("bound-violation", "observed mean hinge exceeded the theorem bound;"
                                  " see trace.csv");
    return 1;
  }
  return 0;
}

int cmd_sweep(const GlobalFlags& flags) {
  usgd::RunConfig cfg = usgd::load_run_config(flags.config_path);
  apply_overrides(cfg, flags);
  if (cfg.sweep.seeds.empty()) {
    throw usgd::SchemaError("config: sweep.seeds is required for the sweep command");
  }
  const usgd::Dataset ds = usgd::build_dataset(cfg);
  const usgd::LearnerConfig learner = usgd::build_learner_config(cfg, ds);
  const usgd::SweepReport report = usgd::run_mu_sweep(
      ds, cfg.sweep.mu_values, learner, cfg.sweep.seeds, resolve_parallelism(flags));

  fs::create_directories(flags.out_dir);
  write_file(fs::path(flags.out_dir) / "sweep.csv", usgd::sweep_csv(report));

  json summary = summary_common(cfg);
  json aggs = json::array();
  for (const usgd::SweepAggregate& a : report.aggregates) {
    aggs.push_back({{"mu", a.mu},
                    {"mean_test_error", a.mean_test_error},
                    {"stderr_test_error", a.stderr_test_error},
                    {"mean_query_fraction", a.mean_query_fraction},
                    {"mean_sigma_fraction", a.mean_sigma_fraction}});
  }
  summary["aggregates"] = aggs;
  write_file(fs::path(flags.out_dir) / "sweep_summary.json", summary.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming uncertainty-sampling experiments for linear classifiers"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalFlags flags;
  app.add_option("--seed", flags.seed, "override every seed in the config");
  app.add_flag("--deterministic", flags.deterministic,
               "single-threaded execution (parallelism 1)");
  app.add_option("--parallelism", flags.parallelism,
                 "worker threads for sweep cells (default: machine parallelism)");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON config path")->required();
    sub->add_option("--out", flags.out_dir, "output directory")->required();
  };
  CLI::App* gen = app.add_subcommand("generate", "materialize a dataset to disk");
  CLI::App* run = app.add_subcommand("run", "train once and emit trace.csv + summary.json");
  CLI::App* sweep = app.add_subcommand("sweep", "train a mu x seed grid on a frozen stream");
  add_common(gen);
  add_common(run);
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(flags);
    if (run->parsed()) return cmd_run(flags);
    return cmd_sweep(flags);
  } catch (const usgd::SchemaError& e) {
    emit_error("schema", e.what());
  } catch (const usgd::ParseError& e) {
    emit_error("parse", e.what());
  } catch (const usgd::RegimeMismatchError& e) {
    emit_error("regime-mismatch", e.what());
  } catch (const usgd::GenerationError& e) {
    emit_error("generation", e.what());
  } catch (const usgd::QueryError& e) {
    emit_error("query", e.what());
  } catch (const usgd::InvalidInputError& e) {
    emit_error("invalid-input", e.what());
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
  }
  return 2;
}
