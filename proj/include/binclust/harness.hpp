#pragma once

// Batch experiments: many seeded instances of a model (or of a replayed
// response log), both algorithms run to a list of budget checkpoints, and
// error / budget-allocation curves aggregated across instances.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "binclust/adaptive.hpp"
#include "binclust/model.hpp"
#include "binclust/response_log.hpp"

namespace binclust {

struct HardnessInterval {
  double lo = 0.55;
  double hi = 1.0;
};

// Two equal clusters (items [0, n/2) and [n/2, n)).
//   model-1: L = 4, p = (0.01, 0.99, 0.5, 0.5) / (0.99, 0.01, 0.5, 0.5),
//            h drawn uniformly from the interval.
//   model-2: the first two questions of model-1.
//   model-3: L = 4, p = (0.3, 0.2, 0.2, 0.2) / (0.7, 0.2, 0.2, 0.2), h = 1.
Model build_model(std::string_view name, std::size_t n, std::uint64_t seed,
                  HardnessInterval hardness = {});

// Questions whose answer rate differs between at least two clusters.
std::vector<bool> informative_questions(const Model& model);

// The ceil(fraction * n) items with the smallest (hardest) or largest
// (easiest) strength; ties go to the smaller index.
std::vector<bool> hardest_items(std::span<const double> strength, double fraction = 0.2);
std::vector<bool> easiest_items(std::span<const double> strength, double fraction = 0.2);

enum class Algorithm { kUniform, kAdaptive };

std::string_view algorithm_name(Algorithm a);

struct LogSource {
  std::filesystem::path path;
  std::size_t replicate = 1;
  ReplayOrder order = ReplayOrder::kWithReplacement;
};

struct ExperimentConfig {
  // Either a builtin name, a path to a model JSON document, or an inline model.
  std::string model_name;
  std::optional<nlohmann::json> inline_model;
  std::optional<std::size_t> n;
  std::optional<std::size_t> K;
  std::optional<std::size_t> L;
  HardnessInterval hardness;
  std::vector<std::uint64_t> checkpoints;
  std::size_t w = 1;
  std::size_t instances = 1;
  std::uint64_t seed = 0;
  std::vector<Algorithm> algorithms{Algorithm::kUniform, Algorithm::kAdaptive};
  ScoreMode score_mode = ScoreMode::kQuadratic;
  TieBreak tie_break = TieBreak::kRandom;
  HardnessPenalty penalty = HardnessPenalty::kSubtractFromEstimate;
  double threshold_exponent = 0.5;
  std::optional<LogSource> log;
  // Relative model and log paths resolve against this directory.
  std::filesystem::path base_dir;
};

// Unknown keys and broken invariants raise ParseError.
ExperimentConfig config_from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Share order: hard x informative, hard x dummy, rest x informative, rest x dummy.
using Shares = std::array<double, 4>;

struct CheckpointOutcome {
  std::uint64_t t = 0;
  std::optional<double> error;
  std::optional<double> hard20_error;
  std::optional<double> easy20_error;
  // Asks made since the previous checkpoint.
  Shares shares{};
};

struct AlgorithmOutcome {
  Algorithm algorithm = Algorithm::kUniform;
  std::vector<CheckpointOutcome> checkpoints;
  // Asks made after floor(3T/4), T the last checkpoint.
  Shares last_quarter{};
};

struct InstanceOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<AlgorithmOutcome> algorithms;
};

struct CurvePoint {
  Algorithm algorithm = Algorithm::kUniform;
  std::uint64_t t = 0;
  std::optional<double> mean_error;
  std::optional<double> std_error;
  std::optional<double> hard20_error;
  std::optional<double> easy20_error;
  Shares shares{};
};

struct ExperimentResult {
  std::vector<InstanceOutcome> instances;
  std::vector<CurvePoint> curve;
};

class InstanceFailure : public Error {
 public:
  using Error::Error;
};

struct RunControl {
  std::size_t jobs = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

// Simulated instances. Instance s uses seed derive(config.seed, "instance", s);
// its model, uniform run and adaptive run draw from separate derived streams.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunControl& control = {});

// Replays `log`; every instance draws one user sequence shared by both
// algorithms. Errors are scored against the labels when present.
ExperimentResult replay_experiment(const ResponseLog& log, const ExperimentConfig& config,
                                   const RunControl& control = {});

// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
std::pair<double, double> mean_and_std(std::span<const double> values);

// algorithm,checkpoint_t,mean_error,std_error,hard20_error,share_hard_informative,
// share_hard_dummy,share_rest_informative,share_rest_dummy
void write_curve_csv(std::ostream& out, const ExperimentResult& result);
// algorithm,instance,instance_seed,checkpoint_t,error,hard20_error,easy20_error,
// share_hard_informative,share_hard_dummy,share_rest_informative,share_rest_dummy
void write_instances_csv(std::ostream& out, const ExperimentResult& result);
// algorithm,instance,share_hard_informative,share_hard_dummy,share_rest_informative,
// share_rest_dummy
void write_last_quarter_csv(std::ostream& out, const ExperimentResult& result);

// Fixed-point text used in every CSV artifact.
std::string format_number(double value);

}  // namespace binclust
