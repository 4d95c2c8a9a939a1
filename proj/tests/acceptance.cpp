// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "binclust/divergence.hpp"
#include "binclust/harness.hpp"
#include "binclust/model.hpp"
#include "binclust/rng.hpp"
#include "binclust/source.hpp"
#include "binclust/uniform.hpp"

namespace fs = std::filesystem;
using namespace binclust;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------- 1

// min over c on a uniform grid of max_l |c r_k'l - r_kl|, over ordered pairs.
double grid_rho(const Model& m, std::size_t points) {
  const double hi = 1.0 / m.h_star();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.num_clusters(); ++k) {
    for (std::size_t kp = 0; kp < m.num_clusters(); ++kp) {
      if (k == kp) continue;
      for (std::size_t g = 0; g < points; ++g) {
        const double c = hi * static_cast<double>(g) / static_cast<double>(points - 1);
        double worst = 0.0;
        for (std::size_t l = 0; l < m.num_questions(); ++l) {
          worst = std::max(worst, std::abs(c * m.signature(kp, l) - m.signature(k, l)));
        }
        best = std::min(best, worst);
      }
    }
  }
  return best;
}

Verdict rho_oracle() {
  Verdict v{true, ""};
  for (const char* name : {"model-2", "model-1"}) {
    const Model m = build_model(name, 200, 1);
    const double exact = rho_star(m);
    const double grid = grid_rho(m, 1000000);
    const bool ok = std::abs(exact - 0.98) <= 1e-6 && std::abs(grid - 0.98) <= 1e-6;
    v.pass = v.pass && ok;
    v.detail += std::string(name) + " rho*=" + fmt("%.9f", exact) + " grid=" + fmt("%.9f", grid) + " ";
  }
  return v;
}

// ---------------------------------------------------------------- 2

Verdict kl_properties() {
  const int side = 100;
  std::size_t negative = 0;
  std::size_t zero_mismatch = 0;
  std::size_t pinsker = 0;
  for (int ia = 0; ia < side; ++ia) {
    for (int ib = 0; ib < side; ++ib) {
      const double a = ia / static_cast<double>(side - 1);
      const double b = ib / static_cast<double>(side - 1);
      const double d = kl_bernoulli(a, b);
      if (d < 0.0) ++negative;
      // Clamping b into [1e-12, 1 - 1e-12] leaves KL(x, x) at O(1e-12) on the boundary.
      const bool is_zero = d <= 1e-10;
      if (is_zero != (ia == ib)) ++zero_mismatch;
      if (d < 2.0 * (a - b) * (a - b)) ++pinsker;
    }
  }
  return {negative == 0 && zero_mismatch == 0 && pinsker == 0,
          "grid 100x100: negative=" + std::to_string(negative) + " zero_mismatch=" +
              std::to_string(zero_mismatch) + " pinsker_violations=" + std::to_string(pinsker)};
}

// ---------------------------------------------------------------- 3

Model random_valid_model(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t s = rng::derive(seed, "attempt", attempt);
    const std::size_t K = 2 + rng::uniform_index(3, s, 0);
    const std::size_t L = 1 + rng::uniform_index(6, s, 1);
    std::vector<double> p(K * L);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = 0.05 + 0.9 * rng::uniform01(s, 2, j);
    const std::size_t n = 2 * K;
    std::vector<double> h(n);
    std::vector<std::size_t> sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = 0.55 + 0.45 * rng::uniform01(s, 3, i);
      sigma[i] = i % K;
    }
    Model m(K, L, std::move(p), std::move(h), std::move(sigma));
    const ModelReport r = validate_model(m);
    if (r.a1_ok && r.a2_ok) return m;
  }
}

Verdict sandwich() {
  std::size_t items = 0;
  std::size_t lower_fail = 0;
  std::size_t upper_fail = 0;
  double worst_upper_excess = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Model m = random_valid_model(rng::derive(2024, "sandwich", s));
    for (std::size_t i = 0; i < m.num_items(); ++i) {
      const UniformDivergence d = divergence_uniform(m, i);
      ++items;
      if (d.lower_bound > d.value + 1e-8) ++lower_fail;
      if (d.value > d.upper_bound + 1e-8) {
        ++upper_fail;
        worst_upper_excess = std::max(worst_upper_excess, d.value - d.upper_bound);
      }
    }
  }
  return {lower_fail == 0 && upper_fail == 0,
          "1000 models, " + std::to_string(items) + " items: lower violations=" +
              std::to_string(lower_fail) + " upper violations=" + std::to_string(upper_fail) +
              " worst upper excess=" + fmt("%.3g", worst_upper_excess)};
}

// ---------------------------------------------------------------- 4

Verdict concentration() {
  const std::uint64_t tau = 100;
  const std::size_t L = 4;
  const std::size_t trials = 10000;
  // Items of model-1: hardness varies, every question answered at q in [0.01, 0.99].
  const Model m = build_model("model-1", 2 * trials, 11);
  std::size_t over_01 = 0;
  std::size_t over_02 = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    double worst = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      std::uint64_t positives = 0;
      for (std::uint64_t t = 1; t <= tau; ++t) {
        positives += sample_answers(m, {t, {i}, l}, rng::derive(5, "question", l)).answers[0] > 0;
      }
      worst = std::max(worst, std::abs(static_cast<double>(positives) / tau - m.answer_prob(i, l)));
    }
    over_01 += worst >= 0.1 - 1e-12;
    over_02 += worst >= 0.2 - 1e-12;
  }
  const double f1 = static_cast<double>(over_01) / trials;
  const double f2 = static_cast<double>(over_02) / trials;
  const double b1 = 2.0 * L * std::exp(-2.0 * tau * 0.01);
  const double b2 = 2.0 * L * std::exp(-2.0 * tau * 0.04);
  const double mc_std = std::sqrt(b2 * (1.0 - b2) / trials);
  return {f1 <= b1 && f2 <= b2 + 3.0 * mc_std,
          "eps=0.1 freq=" + fmt("%.4f", f1) + " bound=" + fmt("%.4f", b1) + "; eps=0.2 freq=" +
              fmt("%.5f", f2) + " bound+3sd=" + fmt("%.5f", b2 + 3.0 * mc_std)};
}

// ---------------------------------------------------------------- 5

Verdict exponential_decay() {
  ExperimentConfig c;
  c.model_name = "model-2";
  c.n = 200;
  c.checkpoints = {5000, 10000, 20000, 40000};
  c.instances = 20;
  c.seed = 101;
  c.algorithms = {Algorithm::kUniform};
  const ExperimentResult r = run_experiment(c, {jobs(), {}});
  std::vector<double> t;
  std::vector<double> e;
  bool monotone = true;
  std::string curve;
  for (std::size_t k = 0; k < r.curve.size(); ++k) {
    const double err = *r.curve[k].mean_error;
    curve += fmt("%.5f", err) + " ";
    if (k > 0 && err > *r.curve[k - 1].mean_error) monotone = false;
    if (err > 0.0) {
      t.push_back(static_cast<double>(r.curve[k].t));
      e.push_back(std::log(err));
    }
  }
  double slope = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  if (t.size() >= 2) {
    const double mt = std::accumulate(t.begin(), t.end(), 0.0) / t.size();
    const double me = std::accumulate(e.begin(), e.end(), 0.0) / e.size();
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      sxy += (t[k] - mt) * (e[k] - me);
      sxx += (t[k] - mt) * (t[k] - mt);
      syy += (e[k] - me) * (e[k] - me);
    }
    slope = sxy / sxx;
    r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  }
  const bool fit_ok = t.size() >= 2 && slope < 0.0 && r2 >= 0.8;
  return {monotone && fit_ok, "mean error " + curve + "slope=" + fmt("%.3g", slope) +
                                  " R2=" + fmt("%.4f", r2) + " points=" + std::to_string(t.size())};
}

// ---------------------------------------------------------------- 6, 7, 8

const ExperimentResult& model_one_runs() {
  static const ExperimentResult result = [] {
    ExperimentConfig c;
    c.model_name = "model-1";
    c.n = 200;
    c.checkpoints = {10000, 20000, 40000};
    c.instances = 20;
    c.seed = 202;
    return run_experiment(c, {jobs(), {}});
  }();
  return result;
}

const CheckpointOutcome& final_checkpoint(const InstanceOutcome& inst, Algorithm a) {
  for (const auto& o : inst.algorithms) {
    if (o.algorithm == a) return o.checkpoints.back();
  }
  throw std::logic_error("algorithm missing");
}

const AlgorithmOutcome& outcome(const InstanceOutcome& inst, Algorithm a) {
  for (const auto& o : inst.algorithms) {
    if (o.algorithm == a) return o;
  }
  throw std::logic_error("algorithm missing");
}

Verdict hardness_ordering() {
  const ExperimentResult& r = model_one_runs();
  double hard = 0.0;
  double easy = 0.0;
  for (const auto& inst : r.instances) {
    const CheckpointOutcome& c = final_checkpoint(inst, Algorithm::kUniform);
    hard += *c.hard20_error;
    easy += *c.easy20_error;
  }
  hard /= r.instances.size();
  easy /= r.instances.size();
  const bool ok = (hard == 0.0 && easy == 0.0) || hard > easy;
  return {ok, "uniform T=40000: hardest20=" + fmt("%.5f", hard) + " easiest20=" + fmt("%.5f", easy)};
}

// P(Binomial(n, 1/2) >= k).
double sign_test_p(std::size_t wins, std::size_t n) {
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  static_cast<double>(n) * std::log(2.0));
  }
  return p;
}

Verdict adaptive_advantage() {
  const ExperimentResult& r = model_one_runs();
  double uni = 0.0;
  double ada = 0.0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  for (const auto& inst : r.instances) {
    const double u = *final_checkpoint(inst, Algorithm::kUniform).error;
    const double a = *final_checkpoint(inst, Algorithm::kAdaptive).error;
    uni += u;
    ada += a;
    wins += a < u;
    losses += a > u;
  }
  uni /= r.instances.size();
  ada /= r.instances.size();
  const double p = wins + losses > 0 ? sign_test_p(wins, wins + losses) : 1.0;
  return {ada < uni && p <= 0.05,
          "T=40000: adaptive=" + fmt("%.5f", ada) + " uniform=" + fmt("%.5f", uni) +
              " wins=" + std::to_string(wins) + " losses=" + std::to_string(losses) +
              " sign-test p=" + fmt("%.4f", p)};
}

Verdict allocation_shift() {
  const ExperimentResult& r = model_one_runs();
  double informative = 0.0;
  double hard_informative = 0.0;
  for (const auto& inst : r.instances) {
    const Shares& s = outcome(inst, Algorithm::kAdaptive).last_quarter;
    informative += s[0] + s[2];
    hard_informative += s[0];
  }
  informative /= r.instances.size();
  hard_informative /= r.instances.size();
  return {informative > 0.6 && hard_informative > 0.1,
          "adaptive last quarter: informative=" + fmt("%.4f", informative) +
              " hardest20 x informative=" + fmt("%.4f", hard_informative)};
}

// ---------------------------------------------------------------- 9

Allocation random_allocation(std::size_t n, std::size_t L, std::uint64_t seed) {
  std::vector<double> v(n * L);
  // Half the draws are spread out, half concentrate on few coordinates.
  const bool sparse = rng::uniform01(seed, 0) < 0.5;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double u = -std::log(1.0 - rng::uniform01(seed, 1, j));
    v[j] = sparse ? u * u * u : u;
  }
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x *= static_cast<double>(n) / total;
  // Clip at 1 and pour the excess into coordinates with room, in random order.
  double excess = 0.0;
  for (double& x : v) {
    if (x > 1.0) {
      excess += x - 1.0;
      x = 1.0;
    }
  }
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng::uniform_index(k, seed, 2, k)]);
  for (std::size_t j : order) {
    const double add = std::min(1.0 - v[j], excess);
    v[j] += add;
    excess -= add;
  }
  return Allocation(n, L, std::move(v));
}

Model random_small_model(std::uint64_t seed, std::size_t n, std::size_t L) {
  std::vector<double> p(2 * L);
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = 0.05 + 0.9 * rng::uniform01(seed, 1, j);
  std::vector<double> h(n);
  std::vector<std::size_t> sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = 0.55 + 0.45 * rng::uniform01(seed, 2, i);
    sigma[i] = i % 2;
  }
  return Model(2, L, std::move(p), std::move(h), std::move(sigma));
}

// Maximum of the objective over a grid on {y in [0,1]^(2L) : sum y = 2}, L <= 2.
double grid_optimum(const Model& m, double budget, std::size_t steps) {
  const std::size_t L = m.num_questions();
  const double h = 1.0 / static_cast<double>(steps);
  double best = -std::numeric_limits<double>::infinity();
  if (L == 1) return adaptive_objective(m, Allocation(2, 1, {1.0, 1.0}), budget, 1.0);
  // Coordinates (y00, y01, y10, y11); y11 is fixed by the total.
  for (std::size_t a = 0; a <= steps; ++a) {
    for (std::size_t b = 0; b <= steps; ++b) {
      for (std::size_t c = 0; c <= steps; ++c) {
        const double y00 = a * h;
        const double y01 = b * h;
        const double y10 = c * h;
        const double y11 = 2.0 - y00 - y01 - y10;
        if (y11 < -1e-12 || y11 > 1.0 + 1e-12) continue;
        const double v = adaptive_objective(
            m, Allocation(2, 2, {y00, y01, y10, std::clamp(y11, 0.0, 1.0)}), budget, 1.0);
        best = std::max(best, v);
      }
    }
  }
  return best;
}

Verdict adaptive_optimizer() {
  std::size_t beaten = 0;
  double worst_grid_gap = 0.0;
  std::size_t grid_cases = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::uint64_t seed = rng::derive(909, "instance", s);
    // Every fourth instance has two items so the grid oracle applies.
    const bool pair = s % 4 == 0;
    const std::size_t n = pair ? 2 : 2 + 2 * rng::uniform_index(4, seed, 3);
    const std::size_t L = pair ? 1 + s / 4 % 2 : 1 + rng::uniform_index(3, seed, 4);
    const Model m = random_small_model(seed, n, L);
    const double budget = 50.0 * static_cast<double>(n);
    const AdaptiveDivergence a = global_divergence_adaptive(m, budget, 1.0);
    if (!a.allocation.feasible()) ++beaten;
    for (std::uint64_t k = 0; k < 1000; ++k) {
      const Allocation y = random_allocation(n, L, rng::derive(seed, "y", k));
      if (adaptive_objective(m, y, budget, 1.0) > a.global) ++beaten;
    }
    if (pair) {
      ++grid_cases;
      worst_grid_gap = std::max(worst_grid_gap, std::abs(grid_optimum(m, budget, 100) - a.global));
    }
  }
  return {beaten == 0 && worst_grid_gap <= 1e-3,
          "20 instances x 1000 random allocations: beaten=" + std::to_string(beaten) + "; " +
              std::to_string(grid_cases) + " two-item grids: worst gap=" + fmt("%.2e", worst_grid_gap)};
}

// ---------------------------------------------------------------- 10

Verdict permutation_oracle() {
  std::size_t mismatches = 0;
  std::size_t cases = 0;
  for (std::size_t K = 2; K <= 5; ++K) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const std::uint64_t seed = rng::derive(1010, "pair", K * 1000 + s);
      const std::size_t n = 10 + rng::uniform_index(40, seed, 0);
      std::vector<std::size_t> truth(n);
      std::vector<std::size_t> est(n);
      for (std::size_t i = 0; i < n; ++i) {
        truth[i] = rng::uniform_index(K, seed, 1, i);
        // Mostly a relabelled truth with some noise, so matchings are non-trivial.
        est[i] = rng::uniform01(seed, 2, i) < 0.7 ? (truth[i] + s) % K : rng::uniform_index(K, seed, 3, i);
      }
      std::vector<std::size_t> confusion(K * K, 0);
      for (std::size_t i = 0; i < n; ++i) ++confusion[truth[i] * K + est[i]];
      const auto gamma = best_matching_hungarian(confusion, K);
      std::size_t matched = 0;
      for (std::size_t k = 0; k < K; ++k) matched += confusion[k * K + gamma[k]];
      std::vector<std::size_t> perm(K);
      std::iota(perm.begin(), perm.end(), 0);
      std::size_t brute = std::numeric_limits<std::size_t>::max();
      do {
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < n; ++i) wrong += est[i] != perm[truth[i]];
        brute = std::min(brute, wrong);
      } while (std::next_permutation(perm.begin(), perm.end()));
      ++cases;
      mismatches += (n - matched) != brute;
      // The library's exhaustive path must agree as well.
      mismatches += static_cast<std::size_t>(std::llround(
                        misclassification_error(est, truth, K).rate * static_cast<double>(n))) != brute;
    }
  }
  return {mismatches == 0, std::to_string(cases) + " pairs, mismatches=" + std::to_string(mismatches)};
}

// ---------------------------------------------------------------- 11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "binclust_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json")
      << R"({"model": "model-1", "n": 40, "checkpoints": [1000, 2000, 4000], "instances": 6, "seed": 77})";
  auto run = [&](const std::string& out, const std::string& extra) {
    const std::string cmd = std::string(BINCLUST_CLI) + " experiment --config " +
                            (dir / "config.json").string() + " --out " + (dir / out).string() + extra +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
  const bool ran = run("a", "") && run("b", "") && run("c", " --jobs 4");
  std::size_t differing = 0;
  std::size_t bytes = 0;
  for (const char* f : {"curve.csv", "instances.csv", "last_quarter.csv"}) {
    const std::string a = slurp(dir / "a" / f);
    bytes += a.size();
    differing += a.empty() || a != slurp(dir / "b" / f) || a != slurp(dir / "c" / f);
  }
  fs::remove_all(dir);
  return {ran && differing == 0, "3 invocations (1, 1, 4 jobs): differing files=" +
                                     std::to_string(differing) + " bytes compared=" + std::to_string(bytes)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "rho* oracle", 1.0, rho_oracle},
      {2, "KL properties", 1.0, kl_properties},
      {3, "divergence sandwich", 30.0, sandwich},
      {4, "concentration", 30.0, concentration},
      {5, "exponential decay", 300.0, exponential_decay},
      {6, "hardness ordering", 300.0, hardness_ordering},
      {7, "adaptive advantage", 600.0, adaptive_advantage},
      {8, "allocation shift", 600.0, allocation_shift},
      {9, "adaptive-bound optimizer", 60.0, adaptive_optimizer},
      {10, "permutation-error oracle", 5.0, permutation_oracle},
      {11, "determinism", 60.0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = v.pass && in_time;
    failed += !pass;
    std::printf("%s [%d] %s: %s (%.2fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                secs, in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
