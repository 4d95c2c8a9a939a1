#include "binclust/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "binclust/error.hpp"
#include "binclust/rng.hpp"

namespace binclust {

Model::Model(std::size_t num_clusters, std::size_t num_questions,
             std::vector<double> p, std::vector<double> hardness,
             std::vector<std::size_t> cluster_of)
    : num_clusters_(num_clusters),
      num_questions_(num_questions),
      p_(std::move(p)),
      hardness_(std::move(hardness)),
      cluster_of_(std::move(cluster_of)) {
  if (num_clusters_ == 0 || num_questions_ == 0) {
    throw StructureError("model needs at least one cluster and one question");
  }
  if (p_.size() != num_clusters_ * num_questions_) {
    std::ostringstream msg;
    msg << "p has " << p_.size() << " entries, expected K*L = "
        << num_clusters_ * num_questions_;
    throw StructureError(msg.str());
  }
  if (hardness_.empty()) throw StructureError("model has no items");
  if (hardness_.size() != cluster_of_.size()) {
    throw StructureError("h and sigma have different lengths");
  }
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw StructureError("p entries must lie in [0, 1]");
    }
  }
  for (double v : hardness_) {
    if (!(v >= 0.5 && v <= 1.0)) {
      throw StructureError("h entries must lie in [1/2, 1]");
    }
  }
  for (std::size_t k : cluster_of_) {
    if (k >= num_clusters_) throw StructureError("cluster id out of range");
  }

  eta_ = std::numeric_limits<double>::infinity();
  for (double v : p_) eta_ = std::min(eta_, std::min(v, 1.0 - v));
  h_star_ = std::numeric_limits<double>::infinity();
  for (double h : hardness_) h_star_ = std::min(h_star_, 2.0 * h - 1.0);
}

std::vector<double> Model::signature_row(std::size_t k) const {
  std::vector<double> r(num_questions_);
  for (std::size_t l = 0; l < num_questions_; ++l) r[l] = signature(k, l);
  return r;
}

double Model::answer_prob(std::size_t i, std::size_t l) const {
  return mix_prob(hardness_[i], p(cluster_of_[i], l));
}

std::vector<std::size_t> Model::cluster_sizes() const {
  std::vector<std::size_t> sizes(num_clusters_, 0);
  for (std::size_t k : cluster_of_) ++sizes[k];
  return sizes;
}

std::vector<double> Model::cluster_fractions() const {
  const auto sizes = cluster_sizes();
  std::vector<double> alpha(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    alpha[k] = static_cast<double>(sizes[k]) / static_cast<double>(num_items());
  }
  return alpha;
}

double min_scaled_linf_distance(std::span<const double> a,
                                std::span<const double> b, double c_lo,
                                double c_hi) {
  const std::size_t len = a.size();
  auto envelope = [&](double c) {
    double m = 0.0;
    for (std::size_t l = 0; l < len; ++l) {
      m = std::max(m, std::abs(c * a[l] - b[l]));
    }
    return m;
  };

  if (len > 64) {
    double lo = c_lo;
    double hi = c_hi;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (envelope(m1) <= envelope(m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    return std::min({envelope(0.5 * (lo + hi)), envelope(c_lo), envelope(c_hi)});
  }

  // The envelope is the max of the 2L lines +-(c a_l - b_l); its minimum is at
  // an interval endpoint or where two of those lines cross.
  double best = std::min(envelope(c_lo), envelope(c_hi));
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t m = l; m < len; ++m) {
      for (int s : {1, -1}) {
        for (int t : {1, -1}) {
          if (l == m && s == t) continue;
          const double denom = s * a[l] - t * a[m];
          if (denom == 0.0) continue;
          const double c = (s * b[l] - t * b[m]) / denom;
          if (c >= c_lo && c <= c_hi) best = std::min(best, envelope(c));
        }
      }
    }
  }
  return best;
}

double rho_star(const Model& model) {
  const double h_star = model.h_star();
  if (!(h_star > 0.0)) {
    throw AssumptionError("rho* is undefined when h* = 0");
  }
  const std::size_t K = model.num_clusters();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const auto r_k = model.signature_row(k);
    for (std::size_t kp = 0; kp < K; ++kp) {
      if (kp == k) continue;
      const auto r_kp = model.signature_row(kp);
      best = std::min(best, min_scaled_linf_distance(r_kp, r_k, 0.0, 1.0 / h_star));
    }
  }
  return best;
}

ModelReport validate_model(const Model& model) {
  if (model.num_clusters() < 2) {
    throw StructureError("model needs K >= 2 clusters");
  }
  const auto sizes = model.cluster_sizes();
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) {
      throw StructureError("cluster " + std::to_string(k + 1) + " is empty");
    }
  }

  ModelReport report;
  report.h_star = model.h_star();
  report.eta = model.eta();
  if (report.h_star > 0.0) report.rho_star = rho_star(model);
  report.a1_ok = report.h_star > 0.0 && report.h_star <= 1.0 &&
                 report.rho_star.has_value() && *report.rho_star > 0.0;
  report.a2_ok = report.eta > 0.0;
  return report;
}

ResponseBatch sample_answers(const Model& model, const SelectionEvent& event,
                             std::uint64_t seed) {
  ResponseBatch batch{event, {}};
  batch.answers.reserve(event.items.size());
  for (std::size_t i : event.items) {
    const double q = model.answer_prob(i, event.question);
    const double u = rng::uniform01(seed, event.t, i);
    batch.answers.push_back(u < q ? +1 : -1);
  }
  return batch;
}

nlohmann::json model_to_json(const Model& model) {
  std::vector<std::size_t> sigma(model.num_items());
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = model.cluster_of(i) + 1;
  return nlohmann::json{
      {"n", model.num_items()},
      {"K", model.num_clusters()},
      {"L", model.num_questions()},
      {"p", model.p_matrix()},
      {"h", std::vector<double>(model.hardness().begin(), model.hardness().end())},
      {"sigma", sigma},
  };
}

Model model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("model document must be a JSON object");
  for (const char* key : {"n", "K", "L", "p", "h", "sigma"}) {
    if (!doc.contains(key)) {
      throw ParseError(std::string("model document is missing '") + key + "'");
    }
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "n" && key != "K" && key != "L" && key != "p" && key != "h" &&
        key != "sigma") {
      throw ParseError("unknown model key '" + key + "'");
    }
  }
  try {
    const auto n = doc.at("n").get<std::size_t>();
    const auto K = doc.at("K").get<std::size_t>();
    const auto L = doc.at("L").get<std::size_t>();
    auto p = doc.at("p").get<std::vector<double>>();
    auto h = doc.at("h").get<std::vector<double>>();
    const auto sigma1 = doc.at("sigma").get<std::vector<long long>>();
    if (h.size() != n || sigma1.size() != n) {
      throw StructureError("h and sigma must both have n entries");
    }
    std::vector<std::size_t> sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (sigma1[i] < 1 || static_cast<std::size_t>(sigma1[i]) > K) {
        throw StructureError("sigma entries must be 1-based cluster ids in [1, K]");
      }
      sigma[i] = static_cast<std::size_t>(sigma1[i] - 1);
    }
    return Model(K, L, std::move(p), std::move(h), std::move(sigma));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  }
}

nlohmann::json report_to_json(const ModelReport& report) {
  nlohmann::json doc{
      {"h_star", report.h_star},
      {"eta", report.eta},
      {"a1_ok", report.a1_ok},
      {"a2_ok", report.a2_ok},
  };
  doc["rho_star"] = report.rho_star ? nlohmann::json(*report.rho_star) : nlohmann::json();
  return doc;
}

}  // namespace binclust
