#include "ebscore/cli.hpp"

#include "ebscore/diffusion.hpp"
#include "ebscore/estimator.hpp"
#include "ebscore/harness.hpp"
#include "ebscore/io.hpp"
#include "ebscore/kernel.hpp"
#include "ebscore/metrics.hpp"
#include "ebscore/parallel.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>

namespace ebscore {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "YAML or JSON configuration file");
  cmd->add_option("--set", o.overrides, "Override a configuration value, key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads, 0 = all cores (default: EBSCORE_THREADS or 0)")
      ->check(CLI::NonNegativeNumber);
}

// File config, then --set overrides, then --seed and --out.
Json merged_config(const CommonOptions& o, bool required) {
  Json j = Json::object();
  if (!o.config.empty()) {
    j = load_config(o.config);
  } else if (required) {
    throw IoError("this command needs --config FILE");
  }
  apply_overrides(j, o.overrides);
  if (o.seed) j["seed"] = *o.seed;
  if (o.out) j["output"] = *o.out;
  return j;
}

// Removes and returns j[key] when present.
std::optional<Json> take(Json& j, const std::string& key) {
  if (!j.contains(key)) return std::nullopt;
  Json value = j[key];
  j.erase(key);
  return value;
}

template <typename T>
T take_or(Json& j, const std::string& key, T fallback) {
  const std::optional<Json> v = take(j, key);
  if (!v || v->is_null()) return fallback;
  try {
    return v->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config key '" + key + "': " + e.what());
  }
}

void reject_leftovers(const Json& j, const std::string& command) {
  for (const auto& item : j.items()) {
    throw ParameterError(command + ": unknown configuration key '" + item.key() + "'");
  }
}

fs::path output_dir(const Json& j) {
  const std::string dir = j.value("output", std::string());
  return dir.empty() ? fs::path(".") : fs::path(dir);
}

// ---- estimate ----

struct EstimateOptions {
  std::string sample;
  std::string queries;
  std::optional<double> h;
  std::optional<double> eps;
  std::optional<double> alpha;
  std::optional<double> lip;
};

int cmd_estimate(const CommonOptions& common, const EstimateOptions& o, std::ostream& out) {
  Json j = merged_config(common, false);
  const fs::path dir = output_dir(j);
  take(j, "output");
  take(j, "seed");
  const double alpha = o.alpha.value_or(take_or(j, "alpha", 1.0));
  const double lip = o.lip.value_or(take_or(j, "lip", 1.0));
  std::optional<double> h = o.h;
  std::optional<double> eps = o.eps;
  if (auto v = take(j, "h"); v && !h) h = v->get<double>();
  if (auto v = take(j, "eps"); v && !eps) eps = v->get<double>();
  reject_leftovers(j, "estimate");

  const Matrix sample = read_points(o.sample);
  const Matrix queries = read_points(o.queries);
  require(sample.rows() >= 1, "estimate: the sample is empty");
  require(queries.rows() == 0 || queries.cols() == sample.cols(),
          "estimate: dimension mismatch, sample has " + std::to_string(sample.cols()) + " columns and queries have " +
              std::to_string(queries.cols()));
  Schedule schedule;
  if (!h || !eps) schedule = choose_schedule({sample.rows(), sample.cols(), alpha, lip, 1.0});
  if (h) schedule.h = *h;
  if (eps) schedule.eps = *eps;
  require(schedule.h > 0.0, "estimate: h must be positive");
  require(schedule.eps > 0.0, "estimate: eps must be positive");
  const RegularizedScoreEstimator<double> estimator(sample, schedule.h, schedule.eps);
  const Matrix scores = queries.rows() == 0 ? Matrix(0, sample.cols()) : estimator.batch(queries);
  write_points_csv(dir / "scores.csv", scores);
  out << schedule_json(schedule) << '\n';
  return kExitSuccess;
}

// ---- sweeps ----

int finish_sweep(const fs::path& dir, const std::string& stem, const ExperimentConfig& config,
                 const std::function<RateSweepResult()>& run, std::ostream& out, std::ostream& err) {
  const Json embedded = to_json(config);
  try {
    const RateSweepResult result = run();
    write_sweep(dir, stem, result, embedded, true);
    out << to_json(result).dump(2) << '\n';
    if (!check_expectation(config, result)) {
      err << stem << ": slope outside expected " << *config.expect_slope << " +/- " << config.slope_tolerance << '\n';
      return kExitAssertion;
    }
    return kExitSuccess;
  } catch (const SweepError& e) {
    write_sweep(dir, stem, e.partial(), embedded, false);
    err << stem << ": " << e.what() << " (partial results written)\n";
    return kExitAssertion;
  }
}

int cmd_rate_sweep(const CommonOptions& common, const std::string& kind, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = experiment_config_from_json(merged_config(common, true));
  config.validate();
  const fs::path dir = config.output.empty() ? fs::path(".") : fs::path(config.output);
  if (kind == "ou") return finish_sweep(dir, "ou_sweep", config, [&] { return run_ou_score_sweep(config); }, out, err);
  return finish_sweep(dir, "rate_sweep", config, [&] { return run_rate_sweep(config); }, out, err);
}

int cmd_hellinger_sweep(const CommonOptions& common, const std::string& axis, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = experiment_config_from_json(merged_config(common, true));
  config.validate();
  const fs::path dir = config.output.empty() ? fs::path(".") : fs::path(config.output);
  if (axis == "h") {
    return finish_sweep(dir, "bandwidth_sweep", config, [&] { return run_bandwidth_sweep(config); }, out, err);
  }
  return finish_sweep(dir, "hellinger_sweep", config, [&] { return run_hellinger_sweep(config); }, out, err);
}

// ---- lemma suite ----

int cmd_lemma_suite(const CommonOptions& common, const std::vector<std::string>& flags, std::ostream& out,
                    std::ostream& err) {
  Json j = merged_config(common, false);
  const fs::path dir = output_dir(j);
  take(j, "output");
  const auto seed = take_or<std::uint64_t>(j, "seed", 0);
  std::vector<std::string> names = take_or(j, "lemmas", registered_lemma_checks());
  reject_leftovers(j, "lemma-suite");
  if (!flags.empty()) names = flags;
  const LemmaReport report = run_lemma_suite(names, seed);
  write_text(dir / "lemma_suite.json", report.to_json().dump(2) + "\n");
  for (const LemmaCheck& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " | " << c.instance << " | margin " << format_double(c.margin)
        << '\n';
  }
  out << (report.passed() ? "lemma suite passed" : "lemma suite FAILED") << " (" << report.checks.size()
      << " checks)\n";
  if (!report.passed()) {
    err << "lemma-suite: at least one check failed\n";
    return kExitAssertion;
  }
  return kExitSuccess;
}

// ---- lower bound ----

int cmd_lower_bound(const CommonOptions& common, const std::vector<int>& dims_flag, const std::vector<int>& m_flag,
                    std::ostream& out) {
  Json j = merged_config(common, false);
  const fs::path dir = output_dir(j);
  take(j, "output");
  const auto seed = take_or<std::uint64_t>(j, "seed", 0);
  std::vector<int> dims = take_or(j, "dims", std::vector<int>{1});
  std::vector<int> m_grid = take_or(j, "m_grid", std::vector<int>{4, 8, 16});
  reject_leftovers(j, "lower-bound");
  if (!dims_flag.empty()) dims = dims_flag;
  if (!m_flag.empty()) m_grid = m_flag;
  const LowerBoundReport report = run_lower_bound_scaling(dims, m_grid, seed);
  const Json summary = report.to_json();
  write_text(dir / "lower_bound.json", summary.dump(2) + "\n");
  out << summary["fits"].dump(2) << '\n';
  return kExitSuccess;
}

// ---- ddpm ----

struct DdpmOptions {
  std::optional<std::string> train;
  std::optional<double> eta;
  std::optional<int> steps;
  std::optional<double> eps;
  std::optional<Index> samples;
};

Json stats_json(const MemorizationStats& s) {
  Json j;
  j["threshold"] = s.threshold;
  j["fraction_within"] = s.fraction_within;
  j["min"] = s.min;
  j["q25"] = s.q25;
  j["median"] = s.median;
  j["q75"] = s.q75;
  j["max"] = s.max;
  j["mean"] = s.mean;
  return j;
}

int cmd_ddpm(const CommonOptions& common, const DdpmOptions& o, std::ostream& out) {
  Json j = merged_config(common, false);
  const fs::path dir = output_dir(j);
  take(j, "output");
  const auto seed = take_or<std::uint64_t>(j, "seed", 0);
  std::optional<AnalyticTarget> target;
  if (auto t = take(j, "target")) target = make_target(target_spec_from_json(*t));
  std::optional<std::string> train_path = o.train;
  if (auto v = take(j, "train"); v && !train_path) train_path = v->get<std::string>();
  const auto n_train_cfg = take_or<Index>(j, "n_train", 0);
  DiffusionSchedule schedule;
  schedule.eta = o.eta.value_or(take_or(j, "eta", 0.05));
  schedule.steps = o.steps.value_or(take_or(j, "steps", 100));
  std::optional<double> eps_cfg;
  if (auto v = take(j, "eps")) eps_cfg = v->get<double>();
  const Index n_samples = o.samples.value_or(take_or<Index>(j, "n_samples", 1000));
  reject_leftovers(j, "ddpm");
  require(n_samples >= 0, "ddpm: n_samples must be non-negative");

  Matrix train;
  if (train_path) {
    train = read_points(*train_path);
  } else {
    require(target.has_value() && n_train_cfg >= 1, "ddpm: give --train FILE or a target with n_train");
    train = target->sample(derive_seed(seed, {0x747261696eull}), n_train_cfg);
  }
  require(train.rows() >= 1, "ddpm: the training set is empty");
  require(!target || target->dim() == train.cols(), "ddpm: target and training set dimensions differ");
  const double n_train = static_cast<double>(train.rows());
  schedule.eps = o.eps.value_or(eps_cfg.value_or(1.0 / (n_train * n_train)));
  schedule.validate();

  const Matrix generated = ddpm_sample(OUScoreModel(train, 0.0), schedule, n_samples, derive_seed(seed, {1}));
  write_points_csv(dir / "samples.csv", generated);

  Json run;
  run["version"] = std::string(kVersion);
  run["seed"] = seed;
  run["eta"] = schedule.eta;
  run["K"] = schedule.steps;
  run["eps"] = schedule.eps;
  run["n_train"] = train.rows();
  run["n_samples"] = n_samples;
  run["tv_estimate"] = nullptr;
  run["hellinger_estimate"] = nullptr;
  if (target && target->dim() == 1 && n_samples > 0) {
    const HistogramComparison cmp = compare_histogram(generated.col(0), *target, 64, -4.0, 4.0);
    run["tv_estimate"] = cmp.tv;
    run["hellinger_estimate"] = cmp.hellinger_sq;
  }
  run["memorization_stats"] = stats_json(memorization_stats(generated, train, memorization_threshold(schedule.eta)));
  write_text(dir / "run.json", run.dump(2) + "\n");
  out << run.dump(2) << '\n';
  return kExitSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regularized kernel score estimation, rate sweeps and DDPM sampling", "ebscore"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonOptions common;
  EstimateOptions estimate;
  std::string sweep_kind = "score";
  std::string hellinger_axis = "n";
  std::vector<std::string> lemma_names;
  std::vector<int> dims;
  std::vector<int> m_grid;
  DdpmOptions ddpm;

  CLI::App* est = app.add_subcommand("estimate", "Regularized KDE score at query points");
  // --h is the bandwidth, so help is long-form only here.
  est->set_help_flag("--help", "Print this help message and exit");
  add_common(est, common);
  est->add_option("--sample", estimate.sample, "Sample points (CSV or EBSC)")->required();
  est->add_option("--queries", estimate.queries, "Query points (CSV or EBSC)")->required();
  est->add_option("--h", estimate.h, "Bandwidth (variance units)");
  est->add_option("--eps", estimate.eps, "Density floor");
  est->add_option("--alpha", estimate.alpha, "Subgaussian parameter for the schedule (default 1)");
  est->add_option("--lip", estimate.lip, "Score Lipschitz constant for the schedule (default 1)");

  CLI::App* rate = app.add_subcommand("rate-sweep", "Score loss against n over replicates");
  add_common(rate, common);
  rate->add_option("--kind", sweep_kind, "score: KDE score loss; ou: OU empirical score loss")
      ->check(CLI::IsMember({"score", "ou"}));

  CLI::App* hell = app.add_subcommand("hellinger-sweep", "Smoothed empirical Hellinger rates");
  add_common(hell, common);
  hell->add_option("--axis", hellinger_axis, "n: sweep n at fixed h; h: sweep h at fixed n")
      ->check(CLI::IsMember({"n", "h"}));

  CLI::App* lemma = app.add_subcommand("lemma-suite", "Numerical checks of the supporting inequalities");
  add_common(lemma, common);
  lemma->add_option("--lemma", lemma_names, "Check to run (repeatable; default all)");

  CLI::App* lower = app.add_subcommand("lower-bound", "Perturbation family scalings");
  add_common(lower, common);
  lower->add_option("--dims", dims, "Dimensions (1 and/or 2)");
  lower->add_option("--m-grid", m_grid, "Cells per axis");

  CLI::App* gen = app.add_subcommand("ddpm", "DDPM sampling with the regularized empirical score");
  add_common(gen, common);
  gen->add_option("--train", ddpm.train, "Training points (CSV or EBSC)");
  gen->add_option("--eta", ddpm.eta, "Step size");
  gen->add_option("--steps", ddpm.steps, "Number of reverse steps K");
  gen->add_option("--eps", ddpm.eps, "Score floor (default n_train^-2; 0 disables)");
  gen->add_option("--samples", ddpm.samples, "Number of generated points");

  std::vector<const char*> argv = {"ebscore"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitSuccess : kExitParameter;
  }

  try {
    set_thread_count(common.threads.value_or(thread_count_from_environment(0)));
    if (est->parsed()) return cmd_estimate(common, estimate, out);
    if (rate->parsed()) return cmd_rate_sweep(common, sweep_kind, out, err);
    if (hell->parsed()) return cmd_hellinger_sweep(common, hellinger_axis, out, err);
    if (lemma->parsed()) return cmd_lemma_suite(common, lemma_names, out, err);
    if (lower->parsed()) return cmd_lower_bound(common, dims, m_grid, out);
    if (gen->parsed()) return cmd_ddpm(common, ddpm, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParameter;
  } catch (const ConstructionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParameter;
  } catch (const UnsupportedOperation& e) {
    err << "error: " << e.what() << '\n';
    return kExitParameter;
  } catch (const nlohmann::json::exception& e) {
    err << "error: configuration: " << e.what() << '\n';
    return kExitParameter;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAssertion;
  }
  return kExitParameter;
}

}  // namespace ebscore
