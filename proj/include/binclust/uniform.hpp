#pragma once

// Clustering from uniformly collected answers: every (item, question) pair is
// asked the same number of times, answer rates are turned into
// hardness-free profiles, and a neighbourhood-seeded K-means groups them.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "binclust/model.hpp"
#include "binclust/source.hpp"

namespace binclust {

// Running ask counts Y and positive counts x per (item, question).
class ResponseCounts {
 public:
  ResponseCounts(std::size_t num_items, std::size_t num_questions);

  std::size_t num_items() const { return num_items_; }
  std::size_t num_questions() const { return num_questions_; }

  std::uint64_t asks(std::size_t i, std::size_t l) const { return asks_[i * num_questions_ + l]; }
  std::uint64_t positives(std::size_t i, std::size_t l) const {
    return positives_[i * num_questions_ + l];
  }
  // x / Y, or 1/2 when the pair was never asked.
  double q_hat(std::size_t i, std::size_t l) const;
  std::uint64_t total_asks(std::size_t i) const;

  void record(const ResponseBatch& batch);
  // Throws StructureError if positives > asks or ids are out of range.
  void set(std::size_t i, std::size_t l, std::uint64_t asks, std::uint64_t positives);

  // Rows item_id,question_id,asks,positives with a header line.
  void write_csv(std::ostream& out) const;
  static ResponseCounts read_csv(std::istream& in, std::size_t num_items,
                                 std::size_t num_questions);

 private:
  std::size_t num_items_;
  std::size_t num_questions_;
  std::vector<std::uint64_t> asks_;
  std::vector<std::uint64_t> positives_;
};

// floor(T w / (n L)).
std::uint64_t uniform_repetitions(std::uint64_t budget, std::size_t list_size,
                                  std::size_t num_items, std::size_t num_questions);

struct UniformCollection {
  ResponseCounts counts;
  std::uint64_t repetitions = 0;  // tau
  std::uint64_t users = 0;        // users actually consumed
};

// Asks every question tau = floor(Tw/(nL)) times per item. Users are ordered
// repetition-major, so a larger budget extends the answers of a smaller one.
// Within a (repetition, question) round the items are cut into consecutive
// lists of w (the last list may be shorter). Throws BudgetError when tau = 0.
UniformCollection collect_uniform(ResponseSource& source, std::uint64_t budget,
                                  std::size_t list_size);

struct NormalizedProfile {
  std::vector<double> r_hat;
  bool degenerate = false;
};

// r_hat = (2 q_hat - 1) / ||2 q_hat - 1||_inf; all-1/2 rows are flagged
// degenerate and mapped to the zero vector.
std::vector<NormalizedProfile> normalize_profiles(const ResponseCounts& counts);

struct KMeansOptions {
  // Neighbourhoods use ||r_j - r_i||_inf^2 <= (n/T)^threshold_exponent.
  double threshold_exponent = 0.5;
};

struct ClusterResult {
  std::vector<std::vector<std::size_t>> clusters;  // S_k, ascending ids
  std::vector<std::vector<double>> centroids;      // xi_k
  std::vector<std::size_t> assignment;             // sigma_hat
  std::vector<std::size_t> centers;                // seed items i*_k
  std::vector<std::size_t> neighborhood_sizes;     // |T_i| per item
};

// Neighbourhood-seeded K-means on profiles. `budget` is the T used in the
// neighbourhood threshold. Degenerate profiles are never seeds and only
// placed by the final nearest-centroid pass, which covers every item.
// Throws SeedingError if fewer than K nonempty seed sets can be formed.
ClusterResult kmeans_cluster(std::span<const NormalizedProfile> profiles,
                             std::size_t num_clusters, double budget,
                             const KMeansOptions& options = {});

struct ErrorRecord {
  std::vector<std::size_t> error_set;
  // gamma[k] = estimated cluster matched with true cluster k.
  std::vector<std::size_t> gamma;
  std::vector<std::uint8_t> per_item;
  double rate = 0.0;
};

// confusion[k * K + e] = number of items of true cluster k estimated as e.
// Both return the label matching that maximizes the agreement.
std::vector<std::size_t> best_matching_exhaustive(std::span<const std::size_t> confusion,
                                                  std::size_t num_clusters);
std::vector<std::size_t> best_matching_hungarian(std::span<const std::size_t> confusion,
                                                 std::size_t num_clusters);

// Misclassified items under the best relabelling of the estimate. Exhaustive
// over permutations for K <= 8, Hungarian matching above.
ErrorRecord misclassification_error(std::span<const std::size_t> assignment,
                                    std::span<const std::size_t> truth,
                                    std::size_t num_clusters);
ErrorRecord misclassification_error(const ClusterResult& result,
                                    std::span<const std::size_t> truth);

struct UniformRun {
  UniformCollection collection;
  ClusterResult result;
};

UniformRun run_uniform(ResponseSource& source, std::size_t num_clusters,
                       std::uint64_t budget, std::size_t list_size,
                       const KMeansOptions& options = {});

}  // namespace binclust
