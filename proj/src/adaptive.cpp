#include "binclust/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "binclust/divergence.hpp"
#include "binclust/optimize.hpp"
#include "binclust/rng.hpp"

namespace binclust {

namespace {

constexpr std::uint64_t kStreamItems = 1;
constexpr std::uint64_t kStreamQuestion = 2;
constexpr std::uint64_t kStreamTies = 3;

// Fitted answer rate of item i under its estimated cluster.
double fitted_rate(const AdaptiveState& state, std::size_t i, std::size_t l) {
  return mix_prob(state.h_hat[i], state.p_hat_at(state.sigma_hat[i], l));
}

ItemScore score_against(const AdaptiveState& state, std::size_t i, std::size_t k_prime,
                        ScoreMode mode) {
  const std::size_t L = state.num_questions();
  std::vector<double> target(L);
  for (std::size_t l = 0; l < L; ++l) target[l] = fitted_rate(state, i, l);

  if (mode == ScoreMode::kQuadratic) {
    // (a - b)^2 with a = ((2h'-1) r' + 1)/2 is quadratic in u = 2h'-1.
    double num = 0.0;
    double den = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double y = static_cast<double>(state.counts.asks(i, l));
      const double r = 2.0 * state.p_hat_at(k_prime, l) - 1.0;
      num += y * r * (2.0 * target[l] - 1.0);
      den += y * r * r;
    }
    const double h = den > 0.0 ? std::clamp(0.5 + num / (2.0 * den), 0.5, 1.0) : 0.5;
    double d = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double diff = mix_prob(h, state.p_hat_at(k_prime, l)) - target[l];
      d += static_cast<double>(state.counts.asks(i, l)) * diff * diff;
    }
    return {d, k_prime, h};
  }

  auto objective = [&](double h) {
    double d = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint64_t y = state.counts.asks(i, l);
      if (y == 0) continue;
      d += static_cast<double>(y) * kl_bernoulli(mix_prob(h, state.p_hat_at(k_prime, l)), target[l]);
    }
    return d;
  };
  const Minimum m = golden_section_minimize(objective, 0.5, 1.0);
  return {m.value, k_prime, m.x};
}

}  // namespace

AdaptiveState::AdaptiveState(std::size_t num_items, std::size_t num_clusters_,
                             std::size_t num_questions)
    : num_clusters(num_clusters_),
      counts(num_items, num_questions),
      p_hat(num_clusters_ * num_questions, 0.0),
      h_hat(num_items, 0.5),
      sigma_hat(num_items, 0),
      scores(num_items) {}

std::uint64_t reestimation_period(std::uint64_t budget, std::size_t num_items) {
  if (budget <= num_items) {
    throw BudgetError("adaptive run needs T > n (T = " + std::to_string(budget) +
                      ", n = " + std::to_string(num_items) + ")");
  }
  const double b = static_cast<double>(budget);
  const double period = std::floor(b / (4.0 * std::log(b / static_cast<double>(num_items))));
  if (!(period >= 1.0)) {
    throw BudgetError("re-estimation period floor(T/(4 log(T/n))) is 0");
  }
  return static_cast<std::uint64_t>(period);
}

void estimate_parameters(AdaptiveState& state, const ClusterResult& clusters,
                         std::uint64_t t, HardnessPenalty penalty) {
  const std::size_t n = state.num_items();
  const std::size_t L = state.num_questions();
  const std::size_t K = state.num_clusters;
  if (clusters.assignment.size() != n || clusters.clusters.size() != K) {
    throw StructureError("clustering does not match the adaptive state");
  }

  for (std::size_t k = 0; k < K; ++k) {
    const auto& members = clusters.clusters[k];
    if (members.empty()) continue;
    for (std::size_t l = 0; l < L; ++l) {
      double centred = 0.0;
      for (std::size_t i : members) centred += 2.0 * state.counts.q_hat(i, l) - 1.0;
      state.p_hat[k * L + l] = 0.5 * (centred / static_cast<double>(members.size()) + 1.0);
    }
  }
  state.sigma_hat = clusters.assignment;

  const double log_t = std::log(static_cast<double>(std::max<std::uint64_t>(t, 1)));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t total = state.counts.total_asks(i);
    if (total == 0) {
      state.h_hat[i] = 0.5;
      continue;
    }
    const std::size_t k = state.sigma_hat[i];
    auto objective = [&](double h) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const std::uint64_t y = state.counts.asks(i, l);
        if (y == 0) continue;
        s += static_cast<double>(y) *
             kl_bernoulli(mix_prob(h, state.p_hat_at(k, l)), state.counts.q_hat(i, l));
      }
      return s;
    };
    const double fit = golden_section_minimize(objective, 0.5, 1.0).x;
    if (penalty == HardnessPenalty::kSubtractFromEstimate) {
      const double shift = std::sqrt(log_t / (10.0 * static_cast<double>(total)));
      state.h_hat[i] = std::max(0.5, fit - shift);
    } else {
      state.h_hat[i] = std::max(0.5, fit);
    }
  }
  state.estimated = true;
}

ItemScore score_item(const AdaptiveState& state, std::size_t i, ScoreMode mode) {
  ItemScore best;
  bool first = true;
  for (std::size_t k = 0; k < state.num_clusters; ++k) {
    if (k == state.sigma_hat[i]) continue;
    const ItemScore s = score_against(state, i, k, mode);
    if (first || s.d_hat < best.d_hat) {
      best = s;
      first = false;
    }
  }
  best.d_hat = std::max(best.d_hat, 0.0);
  return best;
}

void item_scores(AdaptiveState& state, ScoreMode mode) {
  for (std::size_t i = 0; i < state.num_items(); ++i) state.scores[i] = score_item(state, i, mode);
}

std::size_t most_informative_question(const AdaptiveState& state, std::size_t item,
                                      TieBreak tie_break, std::uint64_t seed,
                                      std::uint64_t t) {
  const std::size_t L = state.num_questions();
  const double h_prime = state.scores[item].h_prime;
  std::vector<double> value(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double target = fitted_rate(state, item, l);
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < state.num_clusters; ++k) {
      if (k == state.sigma_hat[item]) continue;
      m = std::min(m, kl_bernoulli(mix_prob(h_prime, state.p_hat_at(k, l)), target));
    }
    value[l] = m;
  }
  const double top = *std::max_element(value.begin(), value.end());
  std::vector<std::size_t> best;
  for (std::size_t l = 0; l < L; ++l) {
    if (value[l] == top) best.push_back(l);
  }
  if (tie_break == TieBreak::kSmallestId || best.size() == 1) return best.front();
  return best[rng::uniform_index(best.size(), seed, t, kStreamQuestion)];
}

SelectionEvent select_next(const AdaptiveState& state, std::size_t list_size,
                           std::uint64_t t, TieBreak tie_break, std::uint64_t seed) {
  const std::size_t n = state.num_items();
  if (list_size == 0 || list_size > n) throw StructureError("list size must be in [1, n]");

  SelectionEvent event;
  event.t = t;
  if (!state.estimated) {
    // Partial Fisher-Yates over item ids.
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t r = 0; r < list_size; ++r) {
      const std::size_t pick = r + rng::uniform_index(n - r, seed, t, kStreamItems, r);
      std::swap(ids[r], ids[pick]);
      event.items.push_back(ids[r]);
    }
    event.question = rng::uniform_index(state.num_questions(), seed, t, kStreamQuestion);
    return event;
  }

  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::vector<std::uint64_t> key(n);
  for (std::size_t i = 0; i < n; ++i) {
    key[i] = tie_break == TieBreak::kRandom ? rng::hash(seed, t, kStreamTies, i) : i;
  }
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(list_size), ids.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double da = state.scores[a].d_hat;
                      const double db = state.scores[b].d_hat;
                      if (da != db) return da < db;
                      if (key[a] != key[b]) return key[a] < key[b];
                      return a < b;
                    });
  event.items.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(list_size));
  event.question = most_informative_question(state, event.items.front(), tie_break, seed, t);
  return event;
}

std::array<double, 4> category_shares(const ResponseCounts& now,
                                      const ResponseCounts* before,
                                      const BudgetCategories& categories) {
  std::array<double, 4> asks{0.0, 0.0, 0.0, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < now.num_items(); ++i) {
    for (std::size_t l = 0; l < now.num_questions(); ++l) {
      const std::uint64_t prev = before ? before->asks(i, l) : 0;
      const auto y = static_cast<double>(now.asks(i, l) - prev);
      const std::size_t slot = (categories.hard_item[i] ? 0 : 2) +
                               (categories.informative_question[l] ? 0 : 1);
      asks[slot] += y;
      total += y;
    }
  }
  if (total > 0.0) {
    for (double& a : asks) a /= total;
  }
  return asks;
}

AdaptiveRun run_adaptive(ResponseSource& source, std::size_t num_clusters,
                         std::uint64_t budget, std::size_t list_size,
                         const AdaptiveOptions& options) {
  const std::size_t n = source.num_items();
  const std::size_t L = source.num_questions();
  if (num_clusters < 2) throw StructureError("adaptive run needs K >= 2");
  if (!options.truth.empty() && options.truth.size() != n) {
    throw StructureError("truth has the wrong number of items");
  }

  AdaptiveRun run{ClusterResult{}, AdaptiveHistory{}, AdaptiveState(n, num_clusters, L)};
  AdaptiveState& state = run.state;
  state.tau = reestimation_period(budget, n);

  std::vector<std::uint64_t> observe = options.observe_at;
  std::sort(observe.begin(), observe.end());
  auto next_observe = observe.begin();

  std::optional<ClusterResult> latest;
  ResponseCounts at_last_checkpoint(n, L);

  for (std::uint64_t t = 1; t <= budget; ++t) {
    const SelectionEvent event =
        select_next(state, list_size, t, options.tie_break, options.seed);
    ResponseBatch batch;
    try {
      batch = source.answer(event);
    } catch (const SourceExhausted&) {
      run.history.truncated = true;
      break;
    }
    state.counts.record(batch);
    state.t = t;
    state.last_selection = event;
    if (options.record_rounds) {
      run.history.rounds.push_back({t, event.items, event.question, batch.answers});
    }
    if (state.estimated) {
      for (std::size_t i : event.items) state.scores[i] = score_item(state, i, options.mode);
    }

    if (t % state.tau == 0) {
      CheckpointRecord record;
      record.t = t;
      try {
        const auto profiles = normalize_profiles(state.counts);
        ClusterResult clusters =
            kmeans_cluster(profiles, num_clusters, static_cast<double>(t), options.kmeans);
        estimate_parameters(state, clusters, t, options.penalty);
        item_scores(state, options.mode);
        record.reclustered = true;
        if (!options.truth.empty()) {
          record.error_rate = misclassification_error(clusters, options.truth).rate;
        }
        latest = std::move(clusters);
      } catch (const SeedingError&) {
        // Keep the previous estimates until the next checkpoint.
        record.reclustered = false;
      }
      if (options.categories) {
        record.shares = category_shares(state.counts, &at_last_checkpoint, *options.categories);
      }
      at_last_checkpoint = state.counts;
      run.history.checkpoints.push_back(record);
    }

    while (next_observe != observe.end() && *next_observe <= t) {
      if (*next_observe == t && options.observer) options.observer(state);
      ++next_observe;
    }
  }

  if (latest) {
    run.result = std::move(*latest);
  } else {
    // No re-estimation succeeded; cluster whatever was collected.
    const auto profiles = normalize_profiles(state.counts);
    run.result = kmeans_cluster(profiles, num_clusters,
                                static_cast<double>(std::max<std::uint64_t>(state.t, 1)),
                                options.kmeans);
  }
  return run;
}

void write_history_csv(std::ostream& out, const AdaptiveHistory& history) {
  out << "kind,t,item_id,question_id,answer,error_rate,share_hard_informative,"
         "share_hard_dummy,share_rest_informative,share_rest_dummy\n";
  auto checkpoint_row = [&](const CheckpointRecord& c) {
    out << "checkpoint," << c.t << ",,,,";
    if (c.error_rate) out << *c.error_rate;
    for (std::size_t s = 0; s < 4; ++s) {
      out << ',';
      if (c.shares) out << (*c.shares)[s];
    }
    out << '\n';
  };
  auto cp = history.checkpoints.begin();
  for (const RoundRecord& r : history.rounds) {
    for (std::size_t k = 0; k < r.items.size(); ++k) {
      out << "round," << r.t << ',' << r.items[k] << ',' << r.question << ','
          << (r.answers[k] > 0 ? "+1" : "-1") << ",,,,,\n";
    }
    while (cp != history.checkpoints.end() && cp->t == r.t) checkpoint_row(*cp++);
  }
  while (cp != history.checkpoints.end()) checkpoint_row(*cp++);
}

}  // namespace binclust
