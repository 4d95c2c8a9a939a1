#include "binclust/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "binclust/error.hpp"
#include "binclust/rng.hpp"
#include "binclust/source.hpp"
#include "binclust/uniform.hpp"

namespace binclust {

namespace {

using nlohmann::json;

std::vector<bool> extreme_items(std::span<const double> strength, double fraction,
                                bool smallest) {
  const std::size_t n = strength.size();
  const auto count = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(n),
                       std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return smallest ? strength[a] < strength[b] : strength[a] > strength[b];
  });
  std::vector<bool> out(n, false);
  for (std::size_t r = 0; r < count; ++r) out[ids[r]] = true;
  return out;
}

// What an instance needs to score one clustering and attribute its asks.
struct Scoring {
  std::vector<std::size_t> truth;  // empty when unknown
  std::vector<bool> hard;
  std::vector<bool> easy;
  BudgetCategories categories;
  std::size_t num_clusters = 2;
};

double subset_error(const ErrorRecord& record, const std::vector<bool>& subset) {
  std::size_t size = 0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (!subset[i]) continue;
    ++size;
    wrong += record.per_item[i];
  }
  return size == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(size);
}

void score_into(CheckpointOutcome& out, const std::vector<std::size_t>& assignment,
                const Scoring& scoring) {
  if (scoring.truth.empty()) return;
  const ErrorRecord record =
      misclassification_error(assignment, scoring.truth, scoring.num_clusters);
  out.error = record.rate;
  out.hard20_error = subset_error(record, scoring.hard);
  out.easy20_error = subset_error(record, scoring.easy);
}

// K-means on the given counts; a clustering that cannot be seeded falls back
// to `fallback`.
std::vector<std::size_t> cluster_counts(const ResponseCounts& counts, std::size_t K,
                                        std::uint64_t t, const KMeansOptions& options,
                                        const std::vector<std::size_t>& fallback) {
  try {
    const auto profiles = normalize_profiles(counts);
    return kmeans_cluster(profiles, K, static_cast<double>(t), options).assignment;
  } catch (const SeedingError&) {
    return fallback;
  }
}

std::uint64_t last_quarter_start(const ExperimentConfig& config) {
  return config.checkpoints.back() * 3 / 4;
}

AlgorithmOutcome run_uniform_curve(ResponseSource& source, const ExperimentConfig& config,
                                   const Scoring& scoring) {
  const std::size_t n = source.num_items();
  const KMeansOptions kmeans{config.threshold_exponent};
  const std::vector<std::size_t> unclustered(n, 0);

  AlgorithmOutcome out;
  out.algorithm = Algorithm::kUniform;
  std::optional<ResponseCounts> previous;
  for (std::uint64_t t : config.checkpoints) {
    UniformCollection collection = collect_uniform(source, t, config.w);
    CheckpointOutcome point;
    point.t = t;
    score_into(point,
               cluster_counts(collection.counts, scoring.num_clusters, t, kmeans, unclustered),
               scoring);
    point.shares = category_shares(collection.counts, previous ? &*previous : nullptr,
                                   scoring.categories);
    out.checkpoints.push_back(point);
    previous = std::move(collection.counts);
  }

  const std::uint64_t q = last_quarter_start(config);
  if (uniform_repetitions(q, config.w, n, source.num_questions()) == 0) {
    out.last_quarter = category_shares(*previous, nullptr, scoring.categories);
  } else {
    const UniformCollection before = collect_uniform(source, q, config.w);
    out.last_quarter = category_shares(*previous, &before.counts, scoring.categories);
  }
  return out;
}

AlgorithmOutcome run_adaptive_curve(ResponseSource& source, const ExperimentConfig& config,
                                    const Scoring& scoring, std::uint64_t selection_seed) {
  const std::size_t n = source.num_items();
  const std::uint64_t budget = config.checkpoints.back();
  const std::uint64_t q = last_quarter_start(config);

  AdaptiveOptions options;
  options.mode = config.score_mode;
  options.tie_break = config.tie_break;
  options.penalty = config.penalty;
  options.kmeans.threshold_exponent = config.threshold_exponent;
  options.seed = selection_seed;
  options.record_rounds = false;
  options.observe_at = config.checkpoints;
  options.observe_at.push_back(q);

  std::map<std::uint64_t, ResponseCounts> snapshots;
  std::map<std::uint64_t, std::vector<std::size_t>> assignments;
  const std::vector<std::size_t> unclustered(n, 0);
  options.observer = [&](const AdaptiveState& state) {
    snapshots.insert_or_assign(state.t, state.counts);
    if (std::binary_search(config.checkpoints.begin(), config.checkpoints.end(), state.t)) {
      const auto& fallback = state.estimated ? state.sigma_hat : unclustered;
      assignments.insert_or_assign(
          state.t, cluster_counts(state.counts, scoring.num_clusters, state.t, options.kmeans,
                                  fallback));
    }
  };

  try {
    const AdaptiveRun run = run_adaptive(source, scoring.num_clusters, budget, config.w, options);
    if (run.history.truncated) throw SourceExhausted("response source ran out before the last checkpoint");
  } catch (const SeedingError&) {
    // The run's own final clustering failed; the checkpoints were observed.
  }

  AlgorithmOutcome out;
  out.algorithm = Algorithm::kAdaptive;
  const ResponseCounts* previous = nullptr;
  for (std::uint64_t t : config.checkpoints) {
    CheckpointOutcome point;
    point.t = t;
    score_into(point, assignments.at(t), scoring);
    const ResponseCounts& now = snapshots.at(t);
    point.shares = category_shares(now, previous, scoring.categories);
    out.checkpoints.push_back(point);
    previous = &now;
  }
  out.last_quarter = category_shares(snapshots.at(budget), q > 0 ? &snapshots.at(q) : nullptr,
                                     scoring.categories);
  return out;
}

template <typename Fn>
std::vector<InstanceOutcome> run_instances(std::size_t count, const RunControl& control,
                                           Fn&& run_one) {
  std::vector<std::optional<InstanceOutcome>> outcomes(count);
  std::vector<std::string> failures(count);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t s = next++; s < count; s = next++) {
      try {
        outcomes[s] = run_one(s);
      } catch (const std::exception& e) {
        failures[s] = e.what();
        if (failures[s].empty()) failures[s] = "unknown failure";
      }
      std::lock_guard lock(progress_mutex);
      ++done;
      if (control.progress) control.progress(done, count);
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(control.jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<InstanceOutcome> out;
  for (std::size_t s = 0; s < count; ++s) {
    if (!failures[s].empty()) {
      throw InstanceFailure("instance " + std::to_string(s) + " failed: " + failures[s]);
    }
    out.push_back(std::move(*outcomes[s]));
  }
  return out;
}

std::vector<CurvePoint> aggregate(const std::vector<InstanceOutcome>& instances) {
  std::vector<CurvePoint> curve;
  if (instances.empty()) return curve;
  const auto& first = instances.front();
  for (std::size_t a = 0; a < first.algorithms.size(); ++a) {
    for (std::size_t c = 0; c < first.algorithms[a].checkpoints.size(); ++c) {
      CurvePoint point;
      point.algorithm = first.algorithms[a].algorithm;
      point.t = first.algorithms[a].checkpoints[c].t;
      std::vector<double> errors, hard, easy;
      for (const auto& inst : instances) {
        const CheckpointOutcome& o = inst.algorithms[a].checkpoints[c];
        if (o.error) errors.push_back(*o.error);
        if (o.hard20_error) hard.push_back(*o.hard20_error);
        if (o.easy20_error) easy.push_back(*o.easy20_error);
        for (std::size_t s = 0; s < 4; ++s) point.shares[s] += o.shares[s];
      }
      for (double& s : point.shares) s /= static_cast<double>(instances.size());
      if (!errors.empty()) {
        const auto [mean, sd] = mean_and_std(errors);
        point.mean_error = mean;
        point.std_error = sd;
      }
      if (!hard.empty()) point.hard20_error = mean_and_std(hard).first;
      if (!easy.empty()) point.easy20_error = mean_and_std(easy).first;
      curve.push_back(point);
    }
  }
  return curve;
}

void check_checkpoints(const ExperimentConfig& config) {
  if (config.checkpoints.empty()) throw ParseError("checkpoints must not be empty");
  for (std::size_t c = 0; c < config.checkpoints.size(); ++c) {
    if (config.checkpoints[c] == 0) throw ParseError("checkpoints must be positive");
    if (c > 0 && config.checkpoints[c] <= config.checkpoints[c - 1]) {
      throw ParseError("checkpoints must be strictly increasing");
    }
  }
  if (config.instances == 0) throw ParseError("instances must be at least 1");
  if (config.w == 0) throw ParseError("w must be at least 1");
}

template <typename T>
T enum_from(const json& value, const std::string& key,
            std::initializer_list<std::pair<const char*, T>> names) {
  if (!value.is_string()) throw ParseError("'" + key + "' must be a string");
  const auto text = value.get<std::string>();
  for (const auto& [name, v] : names) {
    if (text == name) return v;
  }
  throw ParseError("unknown value '" + text + "' for '" + key + "'");
}

std::optional<Model> fixed_model(const ExperimentConfig& config) {
  if (config.inline_model) return model_from_json(*config.inline_model);
  if (config.model_name.rfind("model-", 0) == 0) return std::nullopt;
  std::filesystem::path path = config.model_name;
  if (path.is_relative()) path = config.base_dir / path;
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return model_from_json(doc);
}

void check_overrides(const ExperimentConfig& config, const Model& model) {
  if (config.n && *config.n != model.num_items()) {
    throw StructureError("config n = " + std::to_string(*config.n) + " but the model has " +
                         std::to_string(model.num_items()) + " items");
  }
  if (config.K && *config.K != model.num_clusters()) {
    throw StructureError("config K does not match the model");
  }
  if (config.L && *config.L != model.num_questions()) {
    throw StructureError("config L does not match the model");
  }
}

}  // namespace

Model build_model(std::string_view name, std::size_t n, std::uint64_t seed,
                  HardnessInterval hardness) {
  if (n < 2 || n % 2 != 0) {
    throw StructureError("builtin models need an even n >= 2 (got " + std::to_string(n) + ")");
  }
  if (!(hardness.lo >= 0.5 && hardness.lo <= hardness.hi && hardness.hi <= 1.0)) {
    throw StructureError("hardness interval must satisfy 1/2 <= lo <= hi <= 1");
  }
  std::vector<std::size_t> cluster_of(n);
  for (std::size_t i = 0; i < n; ++i) cluster_of[i] = i < n / 2 ? 0 : 1;

  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = hardness.lo + (hardness.hi - hardness.lo) * rng::uniform01(seed, i);
  }

  if (name == "model-1") {
    return Model(2, 4, {0.01, 0.99, 0.5, 0.5, 0.99, 0.01, 0.5, 0.5}, std::move(h),
                 std::move(cluster_of));
  }
  if (name == "model-2") {
    return Model(2, 2, {0.01, 0.99, 0.99, 0.01}, std::move(h), std::move(cluster_of));
  }
  if (name == "model-3") {
    return Model(2, 4, {0.3, 0.2, 0.2, 0.2, 0.7, 0.2, 0.2, 0.2}, std::vector<double>(n, 1.0),
                 std::move(cluster_of));
  }
  throw StructureError("unknown builtin model '" + std::string(name) + "'");
}

std::vector<bool> informative_questions(const Model& model) {
  std::vector<bool> out(model.num_questions(), false);
  for (std::size_t l = 0; l < model.num_questions(); ++l) {
    for (std::size_t k = 1; k < model.num_clusters(); ++k) {
      if (model.p(k, l) != model.p(0, l)) out[l] = true;
    }
  }
  return out;
}

std::vector<bool> hardest_items(std::span<const double> strength, double fraction) {
  return extreme_items(strength, fraction, true);
}

std::vector<bool> easiest_items(std::span<const double> strength, double fraction) {
  return extreme_items(strength, fraction, false);
}

std::string_view algorithm_name(Algorithm a) {
  return a == Algorithm::kUniform ? "uniform" : "adaptive";
}

ExperimentConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  ExperimentConfig config;
  config.base_dir = base_dir;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "model") {
        if (value.is_string()) {
          config.model_name = value.get<std::string>();
        } else if (value.is_object()) {
          config.inline_model = value;
        } else {
          throw ParseError("'model' must be a name, a path or a model object");
        }
      } else if (key == "n") {
        config.n = value.get<std::size_t>();
      } else if (key == "K") {
        config.K = value.get<std::size_t>();
      } else if (key == "L") {
        config.L = value.get<std::size_t>();
      } else if (key == "hardness_interval") {
        if (!value.is_array() || value.size() != 2) {
          throw ParseError("'hardness_interval' must be [lo, hi]");
        }
        config.hardness = {value[0].get<double>(), value[1].get<double>()};
      } else if (key == "checkpoints") {
        config.checkpoints = value.get<std::vector<std::uint64_t>>();
      } else if (key == "w") {
        config.w = value.get<std::size_t>();
      } else if (key == "instances") {
        config.instances = value.get<std::size_t>();
      } else if (key == "seed") {
        config.seed = value.get<std::uint64_t>();
      } else if (key == "algorithms") {
        config.algorithms.clear();
        for (const auto& a : value) {
          config.algorithms.push_back(enum_from<Algorithm>(
              a, key, {{"uniform", Algorithm::kUniform}, {"adaptive", Algorithm::kAdaptive}}));
        }
        if (config.algorithms.empty()) throw ParseError("'algorithms' must not be empty");
      } else if (key == "score_mode") {
        config.score_mode = enum_from<ScoreMode>(
            value, key, {{"kl", ScoreMode::kKl}, {"quadratic", ScoreMode::kQuadratic}});
      } else if (key == "tie_break") {
        config.tie_break = enum_from<TieBreak>(
            value, key, {{"random", TieBreak::kRandom}, {"smallest_id", TieBreak::kSmallestId}});
      } else if (key == "hardness_penalty") {
        config.penalty = enum_from<HardnessPenalty>(
            value, key,
            {{"subtract", HardnessPenalty::kSubtractFromEstimate}, {"none", HardnessPenalty::kNone}});
      } else if (key == "threshold_exponent") {
        config.threshold_exponent = value.get<double>();
      } else if (key == "log") {
        if (!value.is_object()) throw ParseError("'log' must be an object");
        LogSource log;
        bool has_path = false;
        for (const auto& [lkey, lvalue] : value.items()) {
          if (lkey == "path") {
            log.path = lvalue.get<std::string>();
            has_path = true;
          } else if (lkey == "replicate") {
            log.replicate = lvalue.get<std::size_t>();
          } else if (lkey == "order") {
            log.order = enum_from<ReplayOrder>(lvalue, lkey,
                                               {{"with_replacement", ReplayOrder::kWithReplacement},
                                                {"sequential", ReplayOrder::kSequential}});
          } else {
            throw ParseError("unknown key 'log." + lkey + "'");
          }
        }
        if (!has_path) throw ParseError("'log.path' is required");
        if (log.replicate == 0) throw ParseError("'log.replicate' must be at least 1");
        if (log.path.is_relative()) log.path = base_dir / log.path;
        config.log = log;
      } else {
        throw ParseError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (config.model_name.empty() && !config.inline_model && !config.log) {
    throw ParseError("config needs 'model' or 'log'");
  }
  if (!(config.hardness.lo >= 0.5 && config.hardness.lo <= config.hardness.hi &&
        config.hardness.hi <= 1.0)) {
    throw ParseError("'hardness_interval' must satisfy 0.5 <= lo <= hi <= 1");
  }
  if (!(config.threshold_exponent > 0.0)) throw ParseError("'threshold_exponent' must be positive");
  check_checkpoints(config);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunControl& control) {
  check_checkpoints(config);
  const std::optional<Model> fixed = fixed_model(config);
  if (fixed) {
    check_overrides(config, *fixed);
  } else {
    // Surface an unusable builtin model before any thread starts.
    const Model probe = build_model(config.model_name, config.n.value_or(1000), 0, config.hardness);
    ExperimentConfig check = config;
    check.n.reset();
    check_overrides(check, probe);
  }

  auto run_one = [&](std::size_t s) {
    const std::uint64_t seed = rng::derive(config.seed, "instance", s);
    const Model model = fixed ? *fixed
                              : build_model(config.model_name, config.n.value_or(1000),
                                            rng::derive(seed, "model", 0), config.hardness);
    Scoring scoring;
    scoring.truth.assign(model.clusters().begin(), model.clusters().end());
    scoring.hard = hardest_items(model.hardness());
    scoring.easy = easiest_items(model.hardness());
    scoring.categories = {scoring.hard, informative_questions(model)};
    scoring.num_clusters = model.num_clusters();

    InstanceOutcome outcome;
    outcome.index = s;
    outcome.seed = seed;
    for (Algorithm a : config.algorithms) {
      if (a == Algorithm::kUniform) {
        SimulatedSource source(model, rng::derive(seed, "uniform", 0));
        outcome.algorithms.push_back(run_uniform_curve(source, config, scoring));
      } else {
        SimulatedSource source(model, rng::derive(seed, "adaptive", 0));
        outcome.algorithms.push_back(
            run_adaptive_curve(source, config, scoring, rng::derive(seed, "adaptive-select", 0)));
      }
    }
    return outcome;
  };

  ExperimentResult result;
  result.instances = run_instances(config.instances, control, run_one);
  result.curve = aggregate(result.instances);
  return result;
}

ExperimentResult replay_experiment(const ResponseLog& log, const ExperimentConfig& config,
                                   const RunControl& control) {
  check_checkpoints(config);
  if (config.L && *config.L != 1) throw StructureError("replayed logs have a single question (L = 1)");
  if (config.n && *config.n != log.num_items()) {
    throw StructureError("config n = " + std::to_string(*config.n) + " but the log has " +
                         std::to_string(log.num_items()) + " items");
  }
  const std::size_t K = config.K.value_or(log.has_labels() ? log.label_names().size() : 2);
  if (K < 2) {
    throw StructureError("labels name a single cluster; clustering into K = 2 is undefined");
  }
  if (log.has_labels() && log.label_names().size() != K) {
    throw StructureError("labels name " + std::to_string(log.label_names().size()) +
                         " clusters but K = " + std::to_string(K));
  }
  if (log.order == ReplayOrder::kSequential && config.checkpoints.back() > log.num_users()) {
    throw BudgetError("sequential replay has " + std::to_string(log.num_users()) +
                      " users, fewer than the last checkpoint");
  }

  // Without a known hardness, items whose recorded answers are closest to an
  // even split count as hardest.
  std::vector<double> strength(log.num_items());
  for (std::size_t i = 0; i < log.num_items(); ++i) {
    double sum = 0.0;
    for (std::size_t u : log.answered_by(i)) sum += log.answer(u, i);
    strength[i] = std::abs(sum) / static_cast<double>(log.answered_by(i).size());
  }

  Scoring scoring;
  if (log.has_labels()) scoring.truth = log.labels();
  scoring.hard = hardest_items(strength);
  scoring.easy = easiest_items(strength);
  scoring.categories = {scoring.hard, {true}};
  scoring.num_clusters = K;

  auto run_one = [&](std::size_t s) {
    const std::uint64_t seed = rng::derive(config.seed, "instance", s);
    const std::uint64_t draws = rng::derive(seed, "replay", 0);
    InstanceOutcome outcome;
    outcome.index = s;
    outcome.seed = seed;
    for (Algorithm a : config.algorithms) {
      ReplaySource source(log, draws);
      if (a == Algorithm::kUniform) {
        outcome.algorithms.push_back(run_uniform_curve(source, config, scoring));
      } else {
        outcome.algorithms.push_back(
            run_adaptive_curve(source, config, scoring, rng::derive(seed, "adaptive-select", 0)));
      }
    }
    return outcome;
  };

  ExperimentResult result;
  result.instances = run_instances(config.instances, control, run_one);
  result.curve = aggregate(result.instances);
  return result;
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

std::string format_number(double value) {
  if (value == 0.0) value = 0.0;  // no "-0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", value);
  return buf;
}

namespace {

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

void write_shares(std::ostream& out, const Shares& shares) {
  for (double s : shares) out << ',' << format_number(s);
}

}  // namespace

void write_curve_csv(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,checkpoint_t,mean_error,std_error,hard20_error,share_hard_informative,"
         "share_hard_dummy,share_rest_informative,share_rest_dummy\n";
  for (const CurvePoint& p : result.curve) {
    out << algorithm_name(p.algorithm) << ',' << p.t << ',' << optional_number(p.mean_error)
        << ',' << optional_number(p.std_error) << ',' << optional_number(p.hard20_error);
    write_shares(out, p.shares);
    out << '\n';
  }
}

void write_instances_csv(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,instance,instance_seed,checkpoint_t,error,hard20_error,easy20_error,"
         "share_hard_informative,share_hard_dummy,share_rest_informative,share_rest_dummy\n";
  for (const InstanceOutcome& inst : result.instances) {
    for (const AlgorithmOutcome& a : inst.algorithms) {
      for (const CheckpointOutcome& c : a.checkpoints) {
        out << algorithm_name(a.algorithm) << ',' << inst.index << ',' << inst.seed << ','
            << c.t << ',' << optional_number(c.error) << ',' << optional_number(c.hard20_error)
            << ',' << optional_number(c.easy20_error);
        write_shares(out, c.shares);
        out << '\n';
      }
    }
  }
}

void write_last_quarter_csv(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,instance,share_hard_informative,share_hard_dummy,share_rest_informative,"
         "share_rest_dummy\n";
  for (const InstanceOutcome& inst : result.instances) {
    for (const AlgorithmOutcome& a : inst.algorithms) {
      out << algorithm_name(a.algorithm) << ',' << inst.index;
      write_shares(out, a.last_quarter);
      out << '\n';
    }
  }
}

}  // namespace binclust
