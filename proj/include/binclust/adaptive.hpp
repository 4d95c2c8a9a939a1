#pragma once

// Adaptive (list, question) selection. Every tau users the answers gathered
// so far are re-clustered with the uniform K-means procedure, the cluster
// answer rates p_hat and item hardnesses h_hat are re-estimated, and each
// item gets a score d_hat_i: an estimated error exponent for misclassifying
// it. Users are then shown the items with the smallest scores together with
// the question most informative about the weakest item.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "binclust/error.hpp"
#include "binclust/source.hpp"
#include "binclust/uniform.hpp"

namespace binclust {

enum class ScoreMode {
  kKl,
  // KL(x, y) replaced by (x - y)^2, which gives h' in closed form.
  kQuadratic,
};

enum class TieBreak {
  kSmallestId,
  kRandom,
};

enum class HardnessPenalty {
  // h_hat = max(1/2, argmin - sqrt(log t / (10 sum_l Y_il))).
  kSubtractFromEstimate,
  // h_hat = argmin.
  kNone,
};

// Raised by sources that run out of users (sequential replay).
class SourceExhausted : public Error {
 public:
  using Error::Error;
};

struct ItemScore {
  double d_hat = 0.0;
  std::size_t k_prime = 0;
  double h_prime = 0.5;
};

struct AdaptiveState {
  AdaptiveState(std::size_t num_items, std::size_t num_clusters,
                std::size_t num_questions);

  std::size_t num_items() const { return counts.num_items(); }
  std::size_t num_questions() const { return counts.num_questions(); }
  double p_hat_at(std::size_t k, std::size_t l) const {
    return p_hat[k * num_questions() + l];
  }

  std::uint64_t t = 0;
  std::uint64_t tau = 1;
  std::size_t num_clusters;
  ResponseCounts counts;
  std::vector<double> p_hat;  // K x L, row-major
  std::vector<double> h_hat;
  std::vector<std::size_t> sigma_hat;
  std::vector<ItemScore> scores;
  // False until the first successful re-estimation (cold start).
  bool estimated = false;
  SelectionEvent last_selection;
};

// floor(T / (4 log(T/n))). Throws BudgetError when T <= n or the period is 0.
std::uint64_t reestimation_period(std::uint64_t budget, std::size_t num_items);

// Updates p_hat, h_hat and sigma_hat from a clustering of the current counts.
// Clusters that came back empty keep their previous p_hat row.
void estimate_parameters(AdaptiveState& state, const ClusterResult& clusters,
                         std::uint64_t t,
                         HardnessPenalty penalty = HardnessPenalty::kSubtractFromEstimate);

// The minimized objective sum_l Y_il D(h' p_k'l + (1-h')(1-p_k'l), b_il) over
// k' != sigma_hat(i), h' in [1/2, 1], with b_il the fitted answer rate of i.
ItemScore score_item(const AdaptiveState& state, std::size_t i, ScoreMode mode);
void item_scores(AdaptiveState& state, ScoreMode mode);

// argmax_l min_{k' != sigma_hat(item)} KL(h'_item p_k'l + ..., h_hat_item p_sl + ...).
std::size_t most_informative_question(const AdaptiveState& state, std::size_t item,
                                      TieBreak tie_break, std::uint64_t seed,
                                      std::uint64_t t);

// Selection for user `t`: the `list_size` items with the smallest d_hat and
// the most informative question for the first of them. Before the first
// re-estimation both are drawn uniformly at random.
SelectionEvent select_next(const AdaptiveState& state, std::size_t list_size,
                           std::uint64_t t, TieBreak tie_break, std::uint64_t seed);

// Items are split into hardest / rest and questions into informative / dummy.
struct BudgetCategories {
  std::vector<bool> hard_item;
  std::vector<bool> informative_question;
};

// Share of asks in {hard x informative, hard x dummy, rest x informative,
// rest x dummy}, counting only asks made after `before` (if given).
// All zeros when no asks fall in the window.
std::array<double, 4> category_shares(const ResponseCounts& now,
                                      const ResponseCounts* before,
                                      const BudgetCategories& categories);

struct RoundRecord {
  std::uint64_t t = 0;
  std::vector<std::size_t> items;
  std::size_t question = 0;
  std::vector<int> answers;
};

struct CheckpointRecord {
  std::uint64_t t = 0;
  bool reclustered = false;
  std::optional<double> error_rate;
  std::optional<std::array<double, 4>> shares;
};

struct AdaptiveHistory {
  std::vector<RoundRecord> rounds;
  std::vector<CheckpointRecord> checkpoints;
  bool truncated = false;
};

struct AdaptiveOptions {
  ScoreMode mode = ScoreMode::kQuadratic;
  TieBreak tie_break = TieBreak::kRandom;
  HardnessPenalty penalty = HardnessPenalty::kSubtractFromEstimate;
  KMeansOptions kmeans;
  // Seed of the selection randomness (cold start and tie-breaking).
  std::uint64_t seed = 0;
  bool record_rounds = true;
  // Ground truth, when available, for per-checkpoint error rates.
  std::vector<std::size_t> truth;
  std::optional<BudgetCategories> categories;
  // Called with the state after user t for every t listed here.
  std::vector<std::uint64_t> observe_at;
  std::function<void(const AdaptiveState&)> observer;
};

struct AdaptiveRun {
  ClusterResult result;
  AdaptiveHistory history;
  AdaptiveState state;
};

// Runs the adaptive loop for `budget` users. The output clustering is the one
// computed at the last re-estimation.
AdaptiveRun run_adaptive(ResponseSource& source, std::size_t num_clusters,
                         std::uint64_t budget, std::size_t list_size,
                         const AdaptiveOptions& options = {});

// kind,t,item_id,question_id,answer,error_rate,share_hard_informative,
// share_hard_dummy,share_rest_informative,share_rest_dummy
void write_history_csv(std::ostream& out, const AdaptiveHistory& history);

}  // namespace binclust
