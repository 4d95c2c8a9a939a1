#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binclust/divergence.hpp"
#include "binclust/error.hpp"
#include "binclust/harness.hpp"
#include "binclust/rng.hpp"

using namespace binclust;

namespace {

Model two_point(double h) {
  return Model(2, 1, {0.2, 0.8}, {h, h}, {0, 1});
}

Model random_model(std::uint64_t seed) {
  const std::size_t K = 2 + rng::uniform_index(3, seed, 0);
  const std::size_t L = 1 + rng::uniform_index(4, seed, 1);
  std::vector<double> p(K * L);
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = 0.05 + 0.9 * rng::uniform01(seed, 2, j);
  std::vector<double> h;
  std::vector<std::size_t> sigma;
  for (std::size_t i = 0; i < 3 * K; ++i) {
    h.push_back(0.55 + 0.45 * rng::uniform01(seed, 3, i));
    sigma.push_back(i % K);
  }
  return Model(K, L, std::move(p), std::move(h), std::move(sigma));
}

// Brute-force D^U by scanning h' on a grid.
double grid_divergence_uniform(const Model& m, std::size_t i, std::size_t points) {
  const double lo = 0.5 * (m.h_star() + 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.num_clusters(); ++k) {
    if (k == m.cluster_of(i)) continue;
    for (std::size_t g = 0; g <= points; ++g) {
      const double h = lo + (1.0 - lo) * static_cast<double>(g) / static_cast<double>(points);
      double sum = 0.0;
      for (std::size_t l = 0; l < m.num_questions(); ++l) {
        sum += kl_bernoulli(mix_prob(h, m.p(k, l)), m.answer_prob(i, l));
      }
      best = std::min(best, sum / static_cast<double>(m.num_questions()));
    }
  }
  return best;
}

Allocation random_allocation(std::size_t n, std::size_t L, std::uint64_t seed) {
  // Dirichlet-like weights scaled to total n, then clipped at 1 with the
  // excess pushed onto entries that still have room.
  std::vector<double> v(n * L);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = -std::log(1.0 - rng::uniform01(seed, 7, j));
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x *= static_cast<double>(n) / total;
  double excess = 0.0;
  for (double& x : v) {
    if (x > 1.0) {
      excess += x - 1.0;
      x = 1.0;
    }
  }
  for (double& x : v) {
    if (excess <= 0.0) break;
    const double room = std::min(1.0 - x, excess);
    x += room;
    excess -= room;
  }
  return Allocation(n, L, std::move(v));
}

}  // namespace

TEST(Kl, ClosedForms) {
  EXPECT_EQ(kl_bernoulli(0.3, 0.3), 0.0);
  EXPECT_NEAR(kl_bernoulli(0.75, 0.25), 0.5 * std::log(3.0), 1e-12);
  EXPECT_NEAR(kl_bernoulli(0.5, 0.25), 0.5 * std::log(4.0 / 3.0), 1e-12);
  EXPECT_TRUE(std::isfinite(kl_bernoulli(1.0, 0.0)));
  // Clamping keeps KL(0, 0) at the size of the clamp.
  EXPECT_NEAR(kl_bernoulli(0.0, 0.0), 0.0, 1e-11);
}

TEST(Kl, PinskerOnGrid) {
  const int steps = 100;
  for (int a = 0; a <= steps; ++a) {
    for (int b = 1; b < steps; ++b) {
      const double x = a / static_cast<double>(steps);
      const double y = b / static_cast<double>(steps);
      EXPECT_GE(kl_bernoulli(x, y) + 1e-12, 2.0 * (x - y) * (x - y)) << x << " " << y;
    }
  }
}

TEST(DivergenceUniform, SingleQuestionCollapsedInterval) {
  const Model m = two_point(1.0);
  const UniformDivergence d = divergence_uniform(m, 1);
  EXPECT_NEAR(d.value, 0.6 * std::log(4.0), 1e-9);
  EXPECT_EQ(d.argmin_cluster, 0u);
  EXPECT_NEAR(d.lower_bound, 0.72, 1e-12);
  EXPECT_NEAR(d.upper_bound, 3.6, 1e-12);
  const SandwichBounds b = divergence_uniform_bounds(m, 1, 0);
  EXPECT_NEAR(b.lower, 0.72, 1e-12);
  EXPECT_NEAR(b.upper, 3.6, 1e-12);
}

TEST(DivergenceUniform, BoundsVanishAtHalfHardness) {
  const Model m(2, 1, {0.2, 0.8}, {0.5, 1.0}, {0, 1});
  const SandwichBounds b = divergence_uniform_bounds(m, 0, 1);
  EXPECT_EQ(b.lower, 0.0);
  EXPECT_EQ(b.upper, 0.0);
  EXPECT_THROW(divergence_uniform_bounds(two_point(0.9), 0, 0), StructureError);
  EXPECT_THROW(divergence_uniform(m, 0), AssumptionError);
}

TEST(DivergenceUniform, ZeroWhenSignaturesAreCollinear) {
  const Model m(2, 2, {0.75, 0.25, 0.625, 0.375}, {0.75, 0.75, 0.75, 0.75}, {0, 0, 1, 1});
  // Item 0 answers at 0.625 / 0.375, exactly cluster 1 at h' = 1.
  EXPECT_NEAR(divergence_uniform(m, 0).value, 0.0, 1e-12);
}

TEST(DivergenceUniform, GoldenSectionMatchesGrid) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const Model m = random_model(100 + s);
    for (std::size_t i = 0; i < m.num_items(); i += 2) {
      EXPECT_NEAR(divergence_uniform(m, i).value, grid_divergence_uniform(m, i, 100000), 1e-6);
    }
  }
}

TEST(DivergenceUniform, InnerObjectiveIsMidpointConvex) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Model m = random_model(200 + s);
    const std::size_t i = rng::uniform_index(m.num_items(), s, 1);
    const std::size_t k = (m.cluster_of(i) + 1) % m.num_clusters();
    auto f = [&](double h) {
      double sum = 0.0;
      for (std::size_t l = 0; l < m.num_questions(); ++l) {
        sum += kl_bernoulli(mix_prob(h, m.p(k, l)), m.answer_prob(i, l));
      }
      return sum;
    };
    const double a = 0.5 + 0.5 * rng::uniform01(s, 2);
    const double b = 0.5 + 0.5 * rng::uniform01(s, 3);
    EXPECT_LE(f(0.5 * (a + b)), 0.5 * (f(a) + f(b)) + 1e-12);
  }
}

TEST(DivergenceUniform, GlobalAggregate) {
  const std::vector<double> equal{0.3, 0.3, 0.3};
  EXPECT_NEAR(log_mean_exp_divergence(equal, 25.0), 0.3, 1e-12);
  const std::vector<double> pair{0.0, 1.0};
  EXPECT_NEAR(log_mean_exp_divergence(pair, 10.0), -0.1 * std::log((1.0 + std::exp(-10.0)) / 2.0),
              1e-12);
  EXPECT_NEAR(log_mean_exp_divergence(pair, 10.0), 0.0693, 5e-5);
  // Large scale must not underflow to infinity.
  const std::vector<double> far{5.0, 6.0};
  EXPECT_NEAR(log_mean_exp_divergence(far, 1e6), 5.0 + std::log(2.0) / 1e6, 1e-9);
}

TEST(DivergenceUniform, GlobalBetweenMinAndMean) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::vector<double> d(10);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng::uniform01(s, 4, i);
    const double scale = 1.0 + 100.0 * rng::uniform01(s, 5);
    const double g = log_mean_exp_divergence(d, scale);
    EXPECT_GE(g, *std::min_element(d.begin(), d.end()) - 1e-12);
    EXPECT_LE(g, std::accumulate(d.begin(), d.end(), 0.0) / 10.0 + 1e-12);
  }
}

TEST(DivergenceUniform, SandwichHoldsOnRandomModels) {
  // The printed upper constant is not always an upper bound; only the lower
  // half is asserted here. The acceptance suite reports both.
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Model m = random_model(300 + s);
    for (std::size_t i = 0; i < m.num_items(); ++i) {
      const UniformDivergence d = divergence_uniform(m, i);
      EXPECT_LE(d.lower_bound, d.value + 1e-9);
    }
  }
}

TEST(DivergenceAdaptive, SymmetricPair) {
  const Model m = two_point(1.0);
  const Allocation y(2, 1, {1.0, 1.0});
  const PartneredDivergence d = divergence_adaptive(m, 0, y);
  EXPECT_NEAR(d.value, 2.0 * 0.6 * std::log(4.0), 1e-9);
  EXPECT_NEAR(d.value, 1.6635532, 1e-7);
  EXPECT_EQ(d.partner, 1u);
  EXPECT_EQ(divergence_adaptive(m, 0, Allocation(2, 1, {0.0, 0.0})).value, 0.0);
}

TEST(DivergenceAdaptive, IdenticalRowsAcrossClustersGiveZero) {
  const Model m(2, 1, {0.2, 0.8}, {1.0, 0.5, 0.5}, {0, 1, 0});
  // Items 1 and 2 both answer at 1/2.
  EXPECT_EQ(divergence_adaptive(m, 1, Allocation(3, 1, {1.0, 1.0, 1.0})).value, 0.0);
}

TEST(DivergenceAdaptive, SolverReachesSymmetricOptimum) {
  const Model m = two_point(1.0);
  const AdaptiveDivergence a = global_divergence_adaptive(m, 100.0, 1.0);
  EXPECT_NEAR(a.global, 2.0 * 0.6 * std::log(4.0), 1e-6);
  EXPECT_TRUE(a.allocation.feasible());
}

TEST(DivergenceAdaptive, OptimumDominatesRandomAndUniformAllocations) {
  const Model m = build_model("model-1", 12, 5);
  const double T = 2000.0;
  const AdaptiveDivergence a = global_divergence_adaptive(m, T, 1.0);
  EXPECT_TRUE(a.allocation.feasible());
  EXPECT_GE(a.global + 1e-9, adaptive_objective(m, Allocation::uniform(12, 4), T, 1.0));
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Allocation y = random_allocation(12, 4, s);
    ASSERT_TRUE(y.feasible(1e-9));
    EXPECT_GE(a.global + 1e-6, adaptive_objective(m, y, T, 1.0));
  }
}

TEST(DivergenceAdaptive, TraceIsNonDecreasing) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Model m = random_model(500 + s);
    const AdaptiveDivergence a = global_divergence_adaptive(m, 50.0 * m.num_items(), 1.0);
    for (std::size_t k = 1; k < a.optimizer_trace.size(); ++k) {
      EXPECT_GE(a.optimizer_trace[k], a.optimizer_trace[k - 1]);
    }
  }
}

TEST(DivergenceAdaptive, ObjectiveIsMidpointConcave) {
  const Model m = build_model("model-1", 8, 2);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Allocation a = random_allocation(8, 4, 2 * s);
    const Allocation b = random_allocation(8, 4, 2 * s + 1);
    std::vector<double> mid(a.values().size());
    for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = 0.5 * (a.values()[j] + b.values()[j]);
    const double fm = adaptive_objective(m, Allocation(8, 4, mid), 400.0, 1.0);
    const double fa = adaptive_objective(m, a, 400.0, 1.0);
    const double fb = adaptive_objective(m, b, 400.0, 1.0);
    EXPECT_GE(fm + 1e-12, 0.5 * (fa + fb));
  }
}

TEST(ErrorBound, Values) {
  EXPECT_NEAR(error_bound_from_divergence(0.1, 100.0, 1.0, 1), std::exp(-10.0), 1e-15);
  EXPECT_NEAR(error_bound_from_divergence(0.1, 100.0, 1.0, 1), 4.54e-5, 1e-7);
  EXPECT_EQ(error_bound_from_divergence(0.0, 100.0, 1.0, 1), 1.0);
  const Model m = build_model("model-1", 20, 3);
  double prev = 1.0;
  for (double T : {100.0, 1000.0, 10000.0}) {
    const double b = error_lower_bound(BoundKind::kUniformGlobal, m, T, 1.0);
    EXPECT_LE(b, prev);
    prev = b;
  }
  const Model pair = two_point(0.8);
  const double single = error_lower_bound(BoundKind::kSingleQuestion, pair, 100.0, 1.0, 0);
  const double eta = pair.eta();
  EXPECT_NEAR(single, std::exp(-(100.0 / 2.0) * (2.0 / eta) * 0.36 * 0.36), 1e-15);
}
