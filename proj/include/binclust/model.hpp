#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace binclust {

// Probability of a +1 answer for an item of hardness h whose cluster answers
// +1 with probability p: h*p + (1-h)*(1-p), written in the centred form so
// that h = 1/2 gives exactly 1/2.
inline double mix_prob(double h, double p) {
  return 0.5 * ((2.0 * h - 1.0) * (2.0 * p - 1.0) + 1.0);
}

// Ground-truth instance of the binary feedback model.
//
// Items i in [0, n) belong to cluster sigma(i) in [0, K). A user asked
// question l about item i answers +1 with probability
// q_il = h_i p_{sigma(i) l} + (1 - h_i)(1 - p_{sigma(i) l}).
// Immutable after construction.
class Model {
 public:
  // `p` is row-major K x L. Throws StructureError on inconsistent shapes,
  // out-of-range probabilities, hardness outside [1/2, 1] or cluster ids >= K.
  Model(std::size_t num_clusters, std::size_t num_questions,
        std::vector<double> p, std::vector<double> hardness,
        std::vector<std::size_t> cluster_of);

  std::size_t num_items() const { return hardness_.size(); }
  std::size_t num_clusters() const { return num_clusters_; }
  std::size_t num_questions() const { return num_questions_; }

  double p(std::size_t k, std::size_t l) const {
    return p_[k * num_questions_ + l];
  }
  std::span<const double> p_row(std::size_t k) const {
    return {p_.data() + k * num_questions_, num_questions_};
  }
  // r_kl = 2 p_kl - 1.
  double signature(std::size_t k, std::size_t l) const {
    return 2.0 * p(k, l) - 1.0;
  }
  std::vector<double> signature_row(std::size_t k) const;

  double hardness(std::size_t i) const { return hardness_[i]; }
  std::span<const double> hardness() const { return hardness_; }
  std::size_t cluster_of(std::size_t i) const { return cluster_of_[i]; }
  std::span<const std::size_t> clusters() const { return cluster_of_; }

  double answer_prob(std::size_t i, std::size_t l) const;

  // min over (k, l) of min(p_kl, 1 - p_kl).
  double eta() const { return eta_; }
  // min over items of (2 h_i - 1).
  double h_star() const { return h_star_; }

  std::vector<std::size_t> cluster_sizes() const;
  std::vector<double> cluster_fractions() const;

  const std::vector<double>& p_matrix() const { return p_; }

 private:
  std::size_t num_clusters_;
  std::size_t num_questions_;
  std::vector<double> p_;
  std::vector<double> hardness_;
  std::vector<std::size_t> cluster_of_;
  double eta_ = 0.0;
  double h_star_ = 0.0;
};

struct ModelReport {
  double h_star = 0.0;
  // Empty when h* = 0 (the scaling range [0, 1/h*] is unbounded).
  std::optional<double> rho_star;
  double eta = 0.0;
  bool a1_ok = false;
  bool a2_ok = false;
};

// Computes h*, rho*, eta and the assumption flags. Throws StructureError when
// K < 2 or some cluster has no items.
ModelReport validate_model(const Model& model);

// min over ordered pairs k != k' of min_{c in [0, 1/h*]} ||c r_k' - r_k||_inf.
// Throws AssumptionError when h* = 0.
double rho_star(const Model& model);

// min_{c in [c_lo, c_hi]} max_l |c * a_l - b_l|, computed exactly from the
// breakpoints of the piecewise-linear upper envelope (ternary search when the
// vectors are longer than 64).
double min_scaled_linf_distance(std::span<const double> a,
                                std::span<const double> b, double c_lo,
                                double c_hi);

struct SelectionEvent {
  std::uint64_t t = 0;              // user index
  std::vector<std::size_t> items;   // distinct item ids
  std::size_t question = 0;
};

struct ResponseBatch {
  SelectionEvent event;
  std::vector<int> answers;  // +1 / -1, parallel to event.items
};

// Draws independent answers for the listed items. Each answer is keyed by
// (seed, event.t, item) so the result does not depend on call order.
ResponseBatch sample_answers(const Model& model, const SelectionEvent& event,
                             std::uint64_t seed);

// Serialization: {n, K, L, p (row-major), h, sigma (1-based cluster ids)}.
nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);
nlohmann::json report_to_json(const ModelReport& report);

}  // namespace binclust
