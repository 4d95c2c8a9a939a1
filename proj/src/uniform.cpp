#include "binclust/uniform.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "binclust/error.hpp"

namespace binclust {

namespace {

double linf_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) m = std::max(m, std::abs(a[l] - b[l]));
  return m;
}

}  // namespace

ResponseCounts::ResponseCounts(std::size_t num_items, std::size_t num_questions)
    : num_items_(num_items),
      num_questions_(num_questions),
      asks_(num_items * num_questions, 0),
      positives_(num_items * num_questions, 0) {}

double ResponseCounts::q_hat(std::size_t i, std::size_t l) const {
  const std::uint64_t y = asks(i, l);
  if (y == 0) return 0.5;
  return static_cast<double>(positives(i, l)) / static_cast<double>(y);
}

std::uint64_t ResponseCounts::total_asks(std::size_t i) const {
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < num_questions_; ++l) total += asks(i, l);
  return total;
}

void ResponseCounts::record(const ResponseBatch& batch) {
  const std::size_t l = batch.event.question;
  if (l >= num_questions_ || batch.answers.size() != batch.event.items.size()) {
    throw StructureError("response batch does not match the count table");
  }
  for (std::size_t r = 0; r < batch.answers.size(); ++r) {
    const std::size_t i = batch.event.items[r];
    if (i >= num_items_) throw StructureError("item id out of range");
    ++asks_[i * num_questions_ + l];
    if (batch.answers[r] > 0) ++positives_[i * num_questions_ + l];
  }
}

void ResponseCounts::set(std::size_t i, std::size_t l, std::uint64_t asks,
                         std::uint64_t positives) {
  if (i >= num_items_ || l >= num_questions_) throw StructureError("count id out of range");
  if (positives > asks) throw StructureError("positives exceed asks");
  asks_[i * num_questions_ + l] = asks;
  positives_[i * num_questions_ + l] = positives;
}

void ResponseCounts::write_csv(std::ostream& out) const {
  out << "item_id,question_id,asks,positives\n";
  for (std::size_t i = 0; i < num_items_; ++i) {
    for (std::size_t l = 0; l < num_questions_; ++l) {
      out << i << ',' << l << ',' << asks(i, l) << ',' << positives(i, l) << '\n';
    }
  }
}

ResponseCounts ResponseCounts::read_csv(std::istream& in, std::size_t num_items,
                                        std::size_t num_questions) {
  ResponseCounts counts(num_items, num_questions);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "item_id,question_id,asks,positives") {
    throw ParseError("line 1: expected header item_id,question_id,asks,positives");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t i = 0;
    std::size_t l = 0;
    std::uint64_t y = 0;
    std::uint64_t x = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> i >> c1 >> l >> c2 >> y >> c3 >> x) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ParseError("line " + std::to_string(line_no) + ": malformed count row");
    }
    try {
      counts.set(i, l, y, x);
    } catch (const StructureError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return counts;
}

std::uint64_t uniform_repetitions(std::uint64_t budget, std::size_t list_size,
                                  std::size_t num_items, std::size_t num_questions) {
  return budget * list_size / (static_cast<std::uint64_t>(num_items) * num_questions);
}

UniformCollection collect_uniform(ResponseSource& source, std::uint64_t budget,
                                  std::size_t list_size) {
  const std::size_t n = source.num_items();
  const std::size_t L = source.num_questions();
  if (list_size == 0 || list_size > n) {
    throw StructureError("list size must be in [1, n]");
  }
  const std::uint64_t tau = uniform_repetitions(budget, list_size, n, L);
  if (tau == 0) {
    throw BudgetError("budget too small: floor(Tw/(nL)) = 0 for T = " +
                      std::to_string(budget));
  }

  UniformCollection out{ResponseCounts(n, L), tau, 0};
  std::uint64_t t = 0;
  for (std::uint64_t rep = 0; rep < tau; ++rep) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t start = 0; start < n; start += list_size) {
        SelectionEvent event;
        event.t = ++t;
        event.question = l;
        for (std::size_t i = start; i < std::min(n, start + list_size); ++i) {
          event.items.push_back(i);
        }
        out.counts.record(source.answer(event));
      }
    }
  }
  out.users = t;
  return out;
}

std::vector<NormalizedProfile> normalize_profiles(const ResponseCounts& counts) {
  const std::size_t n = counts.num_items();
  const std::size_t L = counts.num_questions();
  std::vector<NormalizedProfile> profiles(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& prof = profiles[i];
    prof.r_hat.resize(L);
    double norm = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      prof.r_hat[l] = 2.0 * counts.q_hat(i, l) - 1.0;
      norm = std::max(norm, std::abs(prof.r_hat[l]));
    }
    if (norm == 0.0) {
      prof.degenerate = true;
      std::fill(prof.r_hat.begin(), prof.r_hat.end(), 0.0);
    } else {
      for (double& v : prof.r_hat) v /= norm;
    }
  }
  return profiles;
}

ClusterResult kmeans_cluster(std::span<const NormalizedProfile> profiles,
                             std::size_t num_clusters, double budget,
                             const KMeansOptions& options) {
  const std::size_t n = profiles.size();
  if (num_clusters == 0) throw StructureError("K must be positive");
  if (!(budget > 0.0)) throw BudgetError("clustering budget must be positive");

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n; ++i) {
    if (!profiles[i].degenerate) usable.push_back(i);
  }
  if (usable.size() < num_clusters) {
    throw SeedingError("only " + std::to_string(usable.size()) +
                       " non-degenerate profiles for K = " + std::to_string(num_clusters));
  }

  const double threshold =
      std::pow(static_cast<double>(n) / budget, options.threshold_exponent);

  ClusterResult result;
  result.neighborhood_sizes.assign(n, 0);
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i : usable) {
    for (std::size_t j : usable) {
      const double d = linf_distance(profiles[i].r_hat, profiles[j].r_hat);
      if (d * d <= threshold) neighbors[i].push_back(j);
    }
    result.neighborhood_sizes[i] = neighbors[i].size();
  }

  std::vector<bool> taken(n, false);
  for (std::size_t k = 0; k < num_clusters; ++k) {
    std::size_t best_item = n;
    std::size_t best_count = 0;
    for (std::size_t i : usable) {
      std::size_t count = 0;
      for (std::size_t j : neighbors[i]) count += taken[j] ? 0 : 1;
      if (count > best_count) {
        best_count = count;
        best_item = i;
      }
    }
    if (best_count == 0) {
      throw SeedingError("seeding produced only " + std::to_string(k) + " of " +
                         std::to_string(num_clusters) +
                         " nonempty seed sets (threshold " + std::to_string(threshold) + ")");
    }
    std::vector<std::size_t> members;
    for (std::size_t j : neighbors[best_item]) {
      if (!taken[j]) {
        taken[j] = true;
        members.push_back(j);
      }
    }
    std::vector<double> centroid(profiles[best_item].r_hat.size(), 0.0);
    for (std::size_t j : members) {
      for (std::size_t l = 0; l < centroid.size(); ++l) centroid[l] += profiles[j].r_hat[l];
    }
    for (double& v : centroid) v /= static_cast<double>(members.size());
    result.centers.push_back(best_item);
    result.centroids.push_back(std::move(centroid));
  }

  result.assignment.resize(n);
  result.clusters.assign(num_clusters, {});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_k = 0;
    double best_d = linf_distance(result.centroids[0], profiles[i].r_hat);
    for (std::size_t k = 1; k < num_clusters; ++k) {
      const double d = linf_distance(result.centroids[k], profiles[i].r_hat);
      if (d < best_d) {
        best_d = d;
        best_k = k;
      }
    }
    result.assignment[i] = best_k;
    result.clusters[best_k].push_back(i);
  }
  return result;
}

ErrorRecord misclassification_error(std::span<const std::size_t> assignment,
                                    std::span<const std::size_t> truth,
                                    std::size_t num_clusters) {
  if (assignment.size() != truth.size()) {
    throw StructureError("estimate and truth cover different item counts");
  }
  const std::size_t K = num_clusters;
  std::vector<std::size_t> confusion(K * K, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= K || assignment[i] >= K) throw StructureError("cluster id out of range");
    ++confusion[truth[i] * K + assignment[i]];
  }

  ErrorRecord record;
  record.gamma = K <= 8 ? best_matching_exhaustive(confusion, K)
                        : best_matching_hungarian(confusion, K);
  record.per_item.assign(truth.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (assignment[i] != record.gamma[truth[i]]) {
      record.per_item[i] = 1;
      record.error_set.push_back(i);
    }
  }
  record.rate = truth.empty() ? 0.0
                              : static_cast<double>(record.error_set.size()) /
                                    static_cast<double>(truth.size());
  return record;
}

ErrorRecord misclassification_error(const ClusterResult& result,
                                    std::span<const std::size_t> truth) {
  return misclassification_error(result.assignment, truth, result.clusters.size());
}

UniformRun run_uniform(ResponseSource& source, std::size_t num_clusters,
                       std::uint64_t budget, std::size_t list_size,
                       const KMeansOptions& options) {
  UniformCollection collection = collect_uniform(source, budget, list_size);
  const auto profiles = normalize_profiles(collection.counts);
  ClusterResult result =
      kmeans_cluster(profiles, num_clusters, static_cast<double>(budget), options);
  return {std::move(collection), std::move(result)};
}

}  // namespace binclust
