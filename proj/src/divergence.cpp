#include "binclust/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binclust/error.hpp"
#include "binclust/optimize.hpp"

namespace binclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double xlogy_ratio(double x, double num, double den) {
  return x > 0.0 ? x * std::log(num / den) : 0.0;
}

void require_h_star(const Model& model) {
  const double h_star = model.h_star();
  if (!(h_star > 0.0 && h_star <= 1.0)) {
    throw AssumptionError("divergence requires h* in (0, 1]");
  }
}

// Pairwise cost table for the adaptive divergence. cost(i, j) for a fixed
// allocation is sum_l y_jl kl(j, i, l) + y_il kl(i, j, l).
class PairTable {
 public:
  explicit PairTable(const Model& model)
      : n_(model.num_items()), L_(model.num_questions()), kl_(n_ * n_ * L_) {
    std::vector<double> q(n_ * L_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t l = 0; l < L_; ++l) q[i * L_ + l] = model.answer_prob(i, l);
    }
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = 0; b < n_; ++b) {
        for (std::size_t l = 0; l < L_; ++l) {
          kl_[(a * n_ + b) * L_ + l] = kl_bernoulli(q[a * L_ + l], q[b * L_ + l]);
        }
      }
    }
    rivals_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (model.cluster_of(j) != model.cluster_of(i)) rivals_[i].push_back(j);
      }
      if (rivals_[i].empty()) {
        throw StructureError("item " + std::to_string(i) +
                             " has no item outside its cluster");
      }
    }
  }

  std::size_t n() const { return n_; }
  std::size_t L() const { return L_; }
  const std::vector<std::size_t>& rivals(std::size_t i) const { return rivals_[i]; }

  // KL(q_a, q_b) on question l.
  double kl(std::size_t a, std::size_t b, std::size_t l) const {
    return kl_[(a * n_ + b) * L_ + l];
  }

  double cost(std::span<const double> y, std::size_t i, std::size_t j) const {
    double c = 0.0;
    for (std::size_t l = 0; l < L_; ++l) {
      c += y[j * L_ + l] * kl(j, i, l) + y[i * L_ + l] * kl(i, j, l);
    }
    return c;
  }

  PartneredDivergence divergence(std::span<const double> y, std::size_t i) const {
    PartneredDivergence best{kInf, 0};
    for (std::size_t j : rivals_[i]) {
      const double c = cost(y, i, j);
      if (c < best.value) best = {c, j};
    }
    return best;
  }

 private:
  std::size_t n_;
  std::size_t L_;
  std::vector<double> kl_;
  std::vector<std::vector<std::size_t>> rivals_;
};

double objective_from(std::span<const double> d, double scale) {
  return log_mean_exp_divergence(d, scale);
}

// Softmax weights exp(-scale d_i) / sum_k exp(-scale d_k).
std::vector<double> item_weights(std::span<const double> d, double scale) {
  const double m = *std::min_element(d.begin(), d.end());
  std::vector<double> w(d.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    w[i] = std::exp(-scale * (d[i] - m));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Linear maximization over {y in [0,1]^{nL}, sum y = n}: mass 1 on the n
// largest gradient coordinates, ties to the smallest flat index.
std::vector<double> linear_oracle(std::span<const double> grad, std::size_t n) {
  std::vector<std::size_t> order(grad.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grad[a] > grad[b]; });
  std::vector<double> vertex(grad.size(), 0.0);
  for (std::size_t r = 0; r < n && r < order.size(); ++r) vertex[order[r]] = 1.0;
  return vertex;
}

}  // namespace

double kl_bernoulli(double a, double b) {
  b = std::clamp(b, kKlClamp, 1.0 - kKlClamp);
  const double v = xlogy_ratio(a, a, b) + xlogy_ratio(1.0 - a, 1.0 - a, 1.0 - b);
  return std::max(v, 0.0);
}

UniformDivergence divergence_uniform(const Model& model, std::size_t i) {
  require_h_star(model);
  const std::size_t K = model.num_clusters();
  const std::size_t L = model.num_questions();
  const std::size_t own = model.cluster_of(i);
  const double h_lo = 0.5 * (model.h_star() + 1.0);

  std::vector<double> q(L);
  for (std::size_t l = 0; l < L; ++l) q[l] = model.answer_prob(i, l);

  UniformDivergence best;
  best.value = kInf;
  for (std::size_t kp = 0; kp < K; ++kp) {
    if (kp == own) continue;
    auto objective = [&](double h) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += kl_bernoulli(mix_prob(h, model.p(kp, l)), q[l]);
      return s / static_cast<double>(L);
    };
    const Minimum m = golden_section_minimize(objective, h_lo, 1.0);
    if (m.value < best.value) {
      best.value = m.value;
      best.argmin_cluster = kp;
      best.argmin_hardness = m.x;
    }
  }
  if (best.value == kInf) throw StructureError("model needs K >= 2 clusters");
  const SandwichBounds bounds = divergence_uniform_bounds(model, i, best.argmin_cluster);
  best.lower_bound = bounds.lower;
  best.upper_bound = bounds.upper;
  return best;
}

SandwichBounds divergence_uniform_bounds(const Model& model, std::size_t i,
                                         std::size_t k_prime) {
  if (model.hardness(i) == 0.5 && k_prime != model.cluster_of(i) &&
      k_prime < model.num_clusters()) {
    return {0.0, 0.0};
  }
  require_h_star(model);
  const std::size_t own = model.cluster_of(i);
  if (k_prime == own || k_prime >= model.num_clusters()) {
    throw StructureError("k' must be a cluster other than sigma(i)");
  }
  const std::size_t L = model.num_questions();
  const double h_star = model.h_star();

  // ||c a - b||_2^2 is a convex quadratic in c, minimized at <a,b>/<a,a>.
  double aa = 0.0;
  double ab = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double a = model.signature(k_prime, l);
    const double b = model.signature(own, l);
    aa += a * a;
    ab += a * b;
  }
  double c = aa > 0.0 ? ab / aa : h_star;
  c = std::clamp(c, h_star, 1.0 / h_star);
  double dist2 = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double diff = c * model.signature(k_prime, l) - model.signature(own, l);
    dist2 += diff * diff;
  }

  const double scale = std::pow(2.0 * model.hardness(i) - 1.0, 2);
  SandwichBounds out;
  out.lower = scale * dist2 / (2.0 * static_cast<double>(L));
  const double eta = model.eta();
  if (out.lower == 0.0) {
    out.upper = 0.0;
  } else {
    out.upper = eta > 0.0 ? out.lower / eta : kInf;
  }
  return out;
}

double log_mean_exp_divergence(std::span<const double> per_item, double scale) {
  if (per_item.empty()) return 0.0;
  const double m = *std::min_element(per_item.begin(), per_item.end());
  double acc = 0.0;
  for (double d : per_item) acc += std::exp(-scale * (d - m));
  acc /= static_cast<double>(per_item.size());
  return m - std::log(acc) / scale;
}

double global_divergence_uniform(const Model& model, double budget,
                                 double list_size) {
  const std::size_t n = model.num_items();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = divergence_uniform(model, i).value;
  return log_mean_exp_divergence(d, budget * list_size / static_cast<double>(n));
}

Allocation::Allocation(std::size_t num_items, std::size_t num_questions,
                       std::vector<double> values)
    : num_items_(num_items), num_questions_(num_questions), values_(std::move(values)) {
  if (values_.size() != num_items_ * num_questions_) {
    throw StructureError("allocation must have n*L entries");
  }
}

Allocation Allocation::uniform(std::size_t num_items, std::size_t num_questions) {
  return Allocation(num_items, num_questions,
                    std::vector<double>(num_items * num_questions,
                                        1.0 / static_cast<double>(num_questions)));
}

bool Allocation::feasible(double tol) const {
  double total = 0.0;
  for (double v : values_) {
    if (v < -tol || v > 1.0 + tol) return false;
    total += v;
  }
  return std::abs(total - static_cast<double>(num_items_)) <= tol;
}

PartneredDivergence divergence_adaptive(const Model& model, std::size_t i,
                                        const Allocation& y) {
  if (y.num_items() != model.num_items() || y.num_questions() != model.num_questions()) {
    throw StructureError("allocation shape does not match the model");
  }
  const std::size_t L = model.num_questions();
  PartneredDivergence best{kInf, 0};
  for (std::size_t j = 0; j < model.num_items(); ++j) {
    if (model.cluster_of(j) == model.cluster_of(i)) continue;
    double c = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double qi = model.answer_prob(i, l);
      const double qj = model.answer_prob(j, l);
      c += y(j, l) * kl_bernoulli(qj, qi) + y(i, l) * kl_bernoulli(qi, qj);
    }
    if (c < best.value) best = {c, j};
  }
  if (best.value == kInf) {
    throw StructureError("item " + std::to_string(i) + " has no item outside its cluster");
  }
  return best;
}

double adaptive_objective(const Model& model, const Allocation& y, double budget,
                          double list_size) {
  const std::size_t n = model.num_items();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = divergence_adaptive(model, i, y).value;
  return log_mean_exp_divergence(d, budget * list_size / static_cast<double>(n));
}

AdaptiveDivergence global_divergence_adaptive(const Model& model, double budget,
                                              double list_size,
                                              const AdaptiveSolverOptions& options) {
  if (!(budget > 0.0 && list_size > 0.0)) {
    throw BudgetError("budget and list size must be positive");
  }
  const PairTable table(model);
  const std::size_t n = table.n();
  const std::size_t L = table.L();
  const double scale = budget * list_size / static_cast<double>(n);

  const Allocation start = Allocation::uniform(n, L);
  std::vector<double> y(start.values().begin(), start.values().end());
  std::vector<double> d(n);
  std::vector<std::size_t> partner(n);
  auto evaluate = [&](std::span<const double> at) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto pd = table.divergence(at, i);
      d[i] = pd.value;
      partner[i] = pd.partner;
    }
    return objective_from(d, scale);
  };

  // Objective along y + gamma * dir. Every pair cost is affine in gamma, so
  // the costs at both ends are tabulated once per direction.
  std::vector<double> cost0(n * n);
  std::vector<double> slope(n * n);
  std::vector<double> line_d(n);
  auto prepare_line = [&](std::span<const double> dir) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : table.rivals(i)) {
        cost0[i * n + j] = table.cost(y, i, j);
        slope[i * n + j] = table.cost(dir, i, j);
      }
    }
  };
  auto line_value = [&](double gamma) {
    for (std::size_t i = 0; i < n; ++i) {
      double m = kInf;
      for (std::size_t j : table.rivals(i)) {
        m = std::min(m, cost0[i * n + j] + gamma * slope[i * n + j]);
      }
      line_d[i] = m;
    }
    return objective_from(line_d, scale);
  };

  // Returns the improvement achieved by moving towards `vertex`.
  auto step_towards = [&](const std::vector<double>& vertex, std::size_t iter,
                          double current) {
    std::vector<double> dir(n * L);
    for (std::size_t k = 0; k < dir.size(); ++k) dir[k] = vertex[k] - y[k];
    prepare_line(dir);
    const double fixed = 2.0 / (static_cast<double>(iter) + 2.0);
    double best_gamma = fixed;
    double best_value = line_value(fixed);
    const Minimum searched = golden_section_minimize(
        [&](double g) { return -line_value(g); }, 0.0, 1.0, 1e-10, 200);
    if (-searched.value > best_value) {
      best_value = -searched.value;
      best_gamma = searched.x;
    }
    if (best_value > current) {
      for (std::size_t k = 0; k < y.size(); ++k) y[k] += best_gamma * dir[k];
      return best_value - current;
    }
    return 0.0;
  };

  AdaptiveDivergence out;
  double current = evaluate(y);
  out.optimizer_trace.push_back(current);
  std::size_t stalls = 0;
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    // Supergradient of the objective at y through the active partners.
    const std::vector<double> w = item_weights(d, scale);
    std::vector<double> grad(n * L, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = partner[i];
      for (std::size_t l = 0; l < L; ++l) {
        grad[j * L + l] += w[i] * table.kl(j, i, l);
        grad[i * L + l] += w[i] * table.kl(i, j, l);
      }
    }
    const std::vector<double> vertex = linear_oracle(grad, n);
    double gap = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) gap += grad[k] * (vertex[k] - y[k]);
    out.duality_gap = gap;
    if (gap <= options.gap_tolerance) {
      out.converged = true;
      break;
    }

    double gained = step_towards(vertex, iter, current);
    if (gained == 0.0) {
      // Stuck on a kink of the inner minimum: use the gradient of a soft-min
      // smoothing instead, with a temperature shrinking over iterations.
      const double mean_d = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
      const double mu = std::max(1e-9, 0.05 * std::max(mean_d, 1e-6) /
                                           std::sqrt(static_cast<double>(iter) + 1.0));
      std::vector<double> smooth(n * L, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> c;
        c.reserve(table.rivals(i).size());
        for (std::size_t j : table.rivals(i)) c.push_back(table.cost(y, i, j));
        const double cmin = *std::min_element(c.begin(), c.end());
        double z = 0.0;
        for (double& v : c) {
          v = std::exp(-(v - cmin) / mu);
          z += v;
        }
        for (std::size_t r = 0; r < c.size(); ++r) {
          const std::size_t j = table.rivals(i)[r];
          const double pi = w[i] * c[r] / z;
          for (std::size_t l = 0; l < L; ++l) {
            smooth[j * L + l] += pi * table.kl(j, i, l);
            smooth[i * L + l] += pi * table.kl(i, j, l);
          }
        }
      }
      gained = step_towards(linear_oracle(smooth, n), iter, current);
    }

    if (gained > 0.0) {
      current = evaluate(y);
      stalls = 0;
    } else if (++stalls >= 50) {
      out.optimizer_trace.push_back(current);
      break;
    }
    out.optimizer_trace.push_back(current);
  }

  for (double& v : y) v = std::clamp(v, 0.0, 1.0);
  current = evaluate(y);
  out.allocation = Allocation(n, L, y);
  out.global = current;
  out.per_item.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.per_item[i] = {d[i], partner[i]};
  return out;
}

double error_bound_from_divergence(double divergence, double budget,
                                   double list_size, std::size_t num_items) {
  return std::exp(-budget * list_size / static_cast<double>(num_items) * divergence);
}

double error_lower_bound(BoundKind kind, const Model& model, double budget,
                         double list_size, std::optional<std::size_t> item,
                         std::optional<double> single_question_constant) {
  const std::size_t n = model.num_items();
  switch (kind) {
    case BoundKind::kUniformPerItem: {
      if (!item) throw StructureError("per-item bound needs an item id");
      return error_bound_from_divergence(divergence_uniform(model, *item).value,
                                         budget, list_size, n);
    }
    case BoundKind::kUniformGlobal:
      return error_bound_from_divergence(
          global_divergence_uniform(model, budget, list_size), budget, list_size, n);
    case BoundKind::kAdaptiveGlobal:
      return error_bound_from_divergence(
          global_divergence_adaptive(model, budget, list_size).global, budget,
          list_size, n);
    case BoundKind::kSingleQuestion: {
      if (!item) throw StructureError("single-question bound needs an item id");
      if (model.num_questions() != 1 || model.num_clusters() != 2) {
        throw StructureError("single-question bound applies to L = 1, K = 2 only");
      }
      const double eta = model.eta();
      if (!single_question_constant && !(eta > 0.0)) {
        throw AssumptionError("default single-question constant 2/eta needs eta > 0");
      }
      const double c = single_question_constant.value_or(2.0 / eta);
      const double hs = 2.0 * model.hardness(*item) - 1.0;
      const double dp = model.p(0, 0) - model.p(1, 0);
      return std::exp(-budget / static_cast<double>(n) * c * hs * hs * dp * dp);
    }
  }
  return 1.0;
}

}  // namespace binclust
