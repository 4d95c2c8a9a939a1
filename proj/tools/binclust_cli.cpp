// binclust: command-line front end.
//
// Exit status: 0 success, 1 usage error, 2 data or model error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "binclust/adaptive.hpp"
#include "binclust/divergence.hpp"
#include "binclust/error.hpp"
#include "binclust/harness.hpp"
#include "binclust/model.hpp"
#include "binclust/response_log.hpp"
#include "binclust/rng.hpp"
#include "binclust/source.hpp"
#include "binclust/uniform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace binclust;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string mode;
  bool verbose = false;
  std::vector<std::uint64_t> budgets;
  std::optional<std::size_t> list_size;
  bool skip_adaptive = false;
  bool history = false;
  std::string log;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

bool is_model_document(const json& doc) { return doc.is_object() && doc.contains("p"); }

ExperimentConfig experiment_config(const Options& opt) {
  ExperimentConfig config = load_config(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  if (opt.mode == "kl") config.score_mode = ScoreMode::kKl;
  if (opt.mode == "quadratic") config.score_mode = ScoreMode::kQuadratic;
  return config;
}

// A model document, or an experiment config whose model is taken as
// instance 0 of the experiment.
Model load_model(const Options& opt, std::optional<ExperimentConfig>* config_out = nullptr) {
  const json doc = read_json(opt.config);
  if (is_model_document(doc)) return model_from_json(doc);
  ExperimentConfig config = experiment_config(opt);
  if (config_out) *config_out = config;
  if (config.inline_model) return model_from_json(*config.inline_model);
  if (config.model_name.rfind("model-", 0) == 0) {
    const std::uint64_t instance = rng::derive(config.seed, "instance", 0);
    return build_model(config.model_name, config.n.value_or(1000),
                       rng::derive(instance, "model", 0), config.hardness);
  }
  fs::path path = config.model_name;
  if (path.is_relative()) path = config.base_dir / path;
  return model_from_json(read_json(path));
}

fs::path output_dir(const Options& opt) {
  const fs::path dir = opt.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::uint64_t single_budget(const Options& opt, const std::optional<ExperimentConfig>& config) {
  if (!opt.budgets.empty()) return opt.budgets.back();
  if (config) return config->checkpoints.back();
  throw UsageError("--budget is required when the config is a bare model");
}

std::size_t list_size(const Options& opt, const std::optional<ExperimentConfig>& config) {
  if (opt.list_size) return *opt.list_size;
  return config ? config->w : 1;
}

json assignment_json(const ClusterResult& result) {
  json sigma = json::array();
  for (std::size_t k : result.assignment) sigma.push_back(k + 1);
  json clusters = json::array();
  for (const auto& members : result.clusters) clusters.push_back(members);
  return json{{"sigma_hat", sigma}, {"clusters", clusters}, {"centers", result.centers}};
}

json error_json(const ClusterResult& result, const Model& model) {
  const ErrorRecord record = misclassification_error(result, model.clusters());
  json gamma = json::array();
  for (std::size_t k : record.gamma) gamma.push_back(k + 1);
  return json{{"rate", record.rate}, {"error_set", record.error_set}, {"gamma", gamma}};
}

int cmd_validate(const Options& opt) {
  const Model model = load_model(opt);
  std::cout << report_to_json(validate_model(model)).dump(2) << '\n';
  return 0;
}

int cmd_bounds(const Options& opt) {
  std::optional<ExperimentConfig> config;
  const Model model = load_model(opt, &config);
  const fs::path dir = output_dir(opt);
  std::vector<std::uint64_t> budgets = opt.budgets;
  if (budgets.empty() && config) budgets = config->checkpoints;
  if (budgets.empty()) throw UsageError("--budget is required when the config is a bare model");
  const double w = static_cast<double>(list_size(opt, config));
  const std::size_t n = model.num_items();

  std::vector<UniformDivergence> per_item;
  for (std::size_t i = 0; i < n; ++i) per_item.push_back(divergence_uniform(model, i));

  {
    std::ofstream out = open_output(dir / "bounds_items.csv");
    out << "item_id,cluster,hardness,D_U,D_U_lower,D_U_upper,k_prime";
    for (std::uint64_t t : budgets) out << ",bound_at_T" << t;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = per_item[i];
      out << i << ',' << model.cluster_of(i) + 1 << ',' << format_number(model.hardness(i))
          << ',' << format_number(d.value) << ',' << format_number(d.lower_bound) << ','
          << format_number(d.upper_bound) << ',' << d.argmin_cluster + 1;
      for (std::uint64_t t : budgets) {
        out << ',' << format_number(error_bound_from_divergence(d.value, static_cast<double>(t), w, n));
      }
      out << '\n';
    }
  }

  std::ofstream out = open_output(dir / "bounds_global.csv");
  out << "budget,D_U_global,uniform_bound,D_A_global,adaptive_bound,adaptive_converged\n";
  for (std::uint64_t t : budgets) {
    const double T = static_cast<double>(t);
    const double du = global_divergence_uniform(model, T, w);
    out << t << ',' << format_number(du) << ','
        << format_number(error_bound_from_divergence(du, T, w, n));
    if (opt.skip_adaptive) {
      out << ",,,\n";
      continue;
    }
    if (opt.verbose) std::cerr << "adaptive bound at T = " << t << "\n";
    const AdaptiveDivergence da = global_divergence_adaptive(model, T, w);
    out << ',' << format_number(da.global) << ','
        << format_number(error_bound_from_divergence(da.global, T, w, n)) << ','
        << (da.converged ? 1 : 0) << '\n';
  }
  return 0;
}

int cmd_simulate(const Options& opt) {
  std::optional<ExperimentConfig> config;
  const Model model = load_model(opt, &config);
  const fs::path dir = output_dir(opt);
  const std::uint64_t seed = config ? config->seed : opt.seed.value_or(0);
  SimulatedSource source(model, rng::derive(rng::derive(seed, "instance", 0), "uniform", 0));
  const UniformCollection collection =
      collect_uniform(source, single_budget(opt, config), list_size(opt, config));
  std::ofstream out = open_output(dir / "counts.csv");
  collection.counts.write_csv(out);
  if (opt.verbose) std::cerr << "simulated " << collection.users << " users\n";
  return 0;
}

int cmd_run_uniform(const Options& opt) {
  std::optional<ExperimentConfig> config;
  const Model model = load_model(opt, &config);
  const fs::path dir = output_dir(opt);
  const std::uint64_t seed = config ? config->seed : opt.seed.value_or(0);
  SimulatedSource source(model, rng::derive(rng::derive(seed, "instance", 0), "uniform", 0));
  const std::uint64_t budget = single_budget(opt, config);
  const std::size_t w = list_size(opt, config);
  KMeansOptions kmeans;
  if (config) kmeans.threshold_exponent = config->threshold_exponent;
  const UniformRun run = run_uniform(source, model.num_clusters(), budget, w, kmeans);

  json doc{{"algorithm", "uniform"}, {"budget", budget}, {"list_size", w},
           {"users", run.collection.users}, {"repetitions", run.collection.repetitions}};
  doc["result"] = assignment_json(run.result);
  doc["error"] = error_json(run.result, model);
  std::ofstream out = open_output(dir / "uniform_result.json");
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_run_adaptive(const Options& opt) {
  std::optional<ExperimentConfig> config;
  const Model model = load_model(opt, &config);
  const fs::path dir = output_dir(opt);
  const std::uint64_t seed = config ? config->seed : opt.seed.value_or(0);
  const std::uint64_t instance = rng::derive(seed, "instance", 0);
  SimulatedSource source(model, rng::derive(instance, "adaptive", 0));
  const std::uint64_t budget = single_budget(opt, config);
  const std::size_t w = list_size(opt, config);

  AdaptiveOptions options;
  if (config) {
    options.mode = config->score_mode;
    options.tie_break = config->tie_break;
    options.penalty = config->penalty;
    options.kmeans.threshold_exponent = config->threshold_exponent;
  }
  if (opt.mode == "kl") options.mode = ScoreMode::kKl;
  if (opt.mode == "quadratic") options.mode = ScoreMode::kQuadratic;
  options.seed = rng::derive(instance, "adaptive-select", 0);
  options.record_rounds = opt.history;
  options.truth.assign(model.clusters().begin(), model.clusters().end());
  options.categories = BudgetCategories{hardest_items(model.hardness()),
                                        informative_questions(model)};
  const AdaptiveRun run = run_adaptive(source, model.num_clusters(), budget, w, options);

  json doc{{"algorithm", "adaptive"}, {"budget", budget}, {"list_size", w},
           {"users", run.state.t}, {"reestimation_period", run.state.tau}};
  doc["result"] = assignment_json(run.result);
  doc["error"] = error_json(run.result, model);
  std::ofstream out = open_output(dir / "adaptive_result.json");
  out << doc.dump(2) << '\n';
  std::ofstream hist = open_output(dir / "adaptive_history.csv");
  write_history_csv(hist, run.history);
  return 0;
}

void write_experiment(const fs::path& dir, const ExperimentResult& result) {
  std::ofstream curve = open_output(dir / "curve.csv");
  write_curve_csv(curve, result);
  std::ofstream inst = open_output(dir / "instances.csv");
  write_instances_csv(inst, result);
  std::ofstream last = open_output(dir / "last_quarter.csv");
  write_last_quarter_csv(last, result);
}

RunControl run_control(const Options& opt) {
  RunControl control;
  control.jobs = opt.jobs;
  control.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\rinstances " << done << '/' << total << (done == total ? "\n" : "")
              << std::flush;
  };
  return control;
}

int cmd_experiment(const Options& opt) {
  const ExperimentConfig config = experiment_config(opt);
  if (config.log) throw UsageError("config has a 'log' section; use the replay subcommand");
  const fs::path dir = output_dir(opt);
  write_experiment(dir, run_experiment(config, run_control(opt)));
  return 0;
}

int cmd_replay(const Options& opt) {
  ExperimentConfig config = experiment_config(opt);
  if (!opt.log.empty()) config.log = LogSource{opt.log, config.log ? config.log->replicate : 1,
                                               config.log ? config.log->order
                                                          : ReplayOrder::kWithReplacement};
  if (!config.log) throw UsageError("replay needs a 'log' section in the config or --log");
  ResponseLog log = ingest_responses(config.log->path);
  if (config.log->replicate > 1) log = replicate(log, config.log->replicate);
  log.order = config.log->order;
  const LogSummary summary = summarize(log);
  std::cerr << "log: " << summary.items << " items, " << summary.users << " users, "
            << summary.answers << " answers";
  if (summary.label_agreement) std::cerr << ", label agreement " << *summary.label_agreement;
  std::cerr << '\n';
  const fs::path dir = output_dir(opt);
  write_experiment(dir, replay_experiment(log, config, run_control(opt)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering items from binary answers to multiple questions"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Model or experiment JSON")->required();
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Master seed (overrides the config)");
    sub->add_flag("-v,--verbose", opt.verbose, "Progress on standard error");
  };
  auto add_mode = [&](CLI::App* sub) {
    sub->add_option("--mode", opt.mode, "Item score: kl or quadratic")
        ->check(CLI::IsMember({"kl", "quadratic"}));
  };
  auto add_budget = [&](CLI::App* sub) {
    sub->add_option("--budget", opt.budgets, "Number of users T");
    sub->add_option("--list-size", opt.list_size, "Items per user (w)");
  };

  CLI::App* validate = app.add_subcommand("validate", "Print the model report as JSON");
  add_common(validate);
  CLI::App* bounds = app.add_subcommand("bounds", "Per-item divergences and error lower bounds");
  add_common(bounds);
  add_budget(bounds);
  bounds->add_flag("--skip-adaptive", opt.skip_adaptive, "Do not optimize the adaptive bound");
  CLI::App* simulate = app.add_subcommand("simulate", "Uniform answer counts for one run");
  add_common(simulate);
  add_budget(simulate);
  CLI::App* run_u = app.add_subcommand("run-uniform", "One uniform run");
  add_common(run_u);
  add_budget(run_u);
  CLI::App* run_a = app.add_subcommand("run-adaptive", "One adaptive run");
  add_common(run_a);
  add_budget(run_a);
  add_mode(run_a);
  run_a->add_flag("--history", opt.history, "Record every round in the history CSV");
  CLI::App* experiment = app.add_subcommand("experiment", "Simulated error curves");
  add_common(experiment);
  add_mode(experiment);
  experiment->add_option("--jobs", opt.jobs, "Parallel instances")->check(CLI::PositiveNumber);
  CLI::App* replay = app.add_subcommand("replay", "Error curves from a recorded response log");
  add_common(replay);
  add_mode(replay);
  replay->add_option("--jobs", opt.jobs, "Parallel instances")->check(CLI::PositiveNumber);
  replay->add_option("--log", opt.log, "Response log CSV (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    const auto chosen = app.get_subcommands();
    std::cerr << (chosen.empty() ? app.help() : chosen.front()->help());
    return 1;
  }

  try {
    if (*validate) return cmd_validate(opt);
    if (*bounds) return cmd_bounds(opt);
    if (*simulate) return cmd_simulate(opt);
    if (*run_u) return cmd_run_uniform(opt);
    if (*run_a) return cmd_run_adaptive(opt);
    if (*experiment) return cmd_experiment(opt);
    if (*replay) return cmd_replay(opt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
