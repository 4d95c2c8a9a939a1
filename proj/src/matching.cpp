#include <algorithm>
#include <limits>
#include <numeric>

#include "binclust/uniform.hpp"

namespace binclust {

std::vector<std::size_t> best_matching_exhaustive(std::span<const std::size_t> confusion,
                                                  std::size_t num_clusters) {
  const std::size_t K = num_clusters;
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  std::size_t best_agree = 0;
  bool first = true;
  do {
    std::size_t agree = 0;
    for (std::size_t k = 0; k < K; ++k) agree += confusion[k * K + perm[k]];
    if (first || agree > best_agree) {
      best_agree = agree;
      best = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Kuhn-Munkres with row/column potentials, O(K^3). Minimizes -confusion.
std::vector<std::size_t> best_matching_hungarian(std::span<const std::size_t> confusion,
                                                 std::size_t num_clusters) {
  const std::size_t K = num_clusters;
  using Cost = long long;
  constexpr Cost kInf = std::numeric_limits<Cost>::max() / 4;
  auto cost = [&](std::size_t row, std::size_t col) {
    return -static_cast<Cost>(confusion[(row - 1) * K + (col - 1)]);
  };

  std::vector<Cost> u(K + 1, 0), v(K + 1, 0);
  std::vector<std::size_t> match(K + 1, 0), way(K + 1, 0);
  for (std::size_t row = 1; row <= K; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<Cost> minv(K + 1, kInf);
    std::vector<bool> used(K + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match[col0];
      Cost delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= K; ++col) {
        if (used[col]) continue;
        const Cost cur = cost(r0, col) - u[r0] - v[col];
        if (cur < minv[col]) {
          minv[col] = cur;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= K; ++col) {
        if (used[col]) {
          u[match[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> gamma(K);
  for (std::size_t col = 1; col <= K; ++col) gamma[match[col] - 1] = col - 1;
  return gamma;
}

}  // namespace binclust
