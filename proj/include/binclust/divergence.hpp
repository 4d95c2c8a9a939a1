#pragma once

// Information-theoretic quantities governing the achievable error rates:
// per-item divergences under uniform and allocated budgets, their global
// log-mean-exp aggregates, and the asymptotic error lower-bound curves
// (the (1 + o(1)) correction factors are dropped).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "binclust/model.hpp"

namespace binclust {

inline constexpr double kKlClamp = 1e-12;

// KL divergence between Bernoulli(a) and Bernoulli(b). b is clamped to
// [1e-12, 1 - 1e-12]; 0 log 0 = 0 for the first argument.
double kl_bernoulli(double a, double b);

struct UniformDivergence {
  double value = 0.0;
  std::size_t argmin_cluster = 0;
  double argmin_hardness = 1.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
};

// min over k' != sigma(i) and h' in [(h*+1)/2, 1] of
// (1/L) sum_l KL(h' p_k'l + (1-h')(1-p_k'l), q_il), with the sandwich bounds
// for the minimizing k'. Throws AssumptionError unless h* in (0, 1].
UniformDivergence divergence_uniform(const Model& model, std::size_t i);

struct SandwichBounds {
  double lower = 0.0;
  double upper = 0.0;
};

// (2h_i-1)^2/(2L) * min_{c in [h*, 1/h*]} ||c r_k' - r_sigma(i)||_2^2, and the
// same divided by eta. Throws StructureError if k' == sigma(i).
SandwichBounds divergence_uniform_bounds(const Model& model, std::size_t i,
                                         std::size_t k_prime);

// -(1/scale) log((1/n) sum_i exp(-scale d_i)), evaluated with a shift by the
// smallest d_i. `scale` is Tw/n.
double log_mean_exp_divergence(std::span<const double> per_item, double scale);

double global_divergence_uniform(const Model& model, double budget,
                                 double list_size);

// y is an n x L allocation with entries in [0, 1] summing to n.
class Allocation {
 public:
  Allocation(std::size_t num_items, std::size_t num_questions,
             std::vector<double> values);
  static Allocation uniform(std::size_t num_items, std::size_t num_questions);

  std::size_t num_items() const { return num_items_; }
  std::size_t num_questions() const { return num_questions_; }
  double operator()(std::size_t i, std::size_t l) const {
    return values_[i * num_questions_ + l];
  }
  std::span<const double> values() const { return values_; }

  // Checks the box and budget constraints to `tol`.
  bool feasible(double tol = 1e-9) const;

 private:
  std::size_t num_items_;
  std::size_t num_questions_;
  std::vector<double> values_;
};

struct PartneredDivergence {
  double value = 0.0;
  std::size_t partner = 0;
};

// min over j with sigma(j) != sigma(i) of
// sum_l (y_jl KL(q_jl, q_il) + y_il KL(q_il, q_jl)). Ties go to the smallest j.
PartneredDivergence divergence_adaptive(const Model& model, std::size_t i,
                                        const Allocation& y);

// The concave objective maximized over allocations:
// -(n/(Tw)) log((1/n) sum_i exp(-(Tw/n) D^A(i, y))).
double adaptive_objective(const Model& model, const Allocation& y,
                          double budget, double list_size);

struct AdaptiveSolverOptions {
  double gap_tolerance = 1e-6;
  std::size_t max_iterations = 2000;
};

struct AdaptiveDivergence {
  std::vector<PartneredDivergence> per_item;
  double global = 0.0;
  Allocation allocation = Allocation::uniform(1, 1);
  // Objective value after every iteration, starting with the initial point.
  std::vector<double> optimizer_trace;
  double duality_gap = 0.0;
  bool converged = false;
};

// Maximizes adaptive_objective over feasible allocations with a
// conditional-gradient method. If the gap does not close within the
// iteration cap the best iterate is returned with converged = false.
AdaptiveDivergence global_divergence_adaptive(
    const Model& model, double budget, double list_size,
    const AdaptiveSolverOptions& options = {});

// exp(-(Tw/n) D).
double error_bound_from_divergence(double divergence, double budget,
                                   double list_size, std::size_t num_items);

enum class BoundKind {
  kUniformPerItem,
  kUniformGlobal,
  kAdaptiveGlobal,
  // L = 1, K = 2 closed form exp(-(T/n) C (2h_i-1)^2 (p_1-p_2)^2).
  kSingleQuestion,
};

// Asymptotic error lower bound of the requested kind. `item` is required for
// the per-item kinds. For kSingleQuestion the constant defaults to 2/eta.
double error_lower_bound(BoundKind kind, const Model& model, double budget,
                         double list_size, std::optional<std::size_t> item = {},
                         std::optional<double> single_question_constant = {});

}  // namespace binclust
