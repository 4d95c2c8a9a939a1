#pragma once

// Recorded single-question feedback (item, optional label, user, +1/-1
// answer) and a response source that replays it user by user.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "binclust/adaptive.hpp"
#include "binclust/source.hpp"

namespace binclust {

enum class ReplayOrder {
  // Each round draws a user uniformly at random, with replacement.
  kWithReplacement,
  // Users in file order; the source is exhausted after the last one.
  kSequential,
};

class ResponseLog {
 public:
  std::size_t num_items() const { return item_names_.size(); }
  std::size_t num_users() const { return user_names_.size(); }
  std::size_t num_answers() const { return num_answers_; }

  const std::vector<std::string>& item_names() const { return item_names_; }
  const std::vector<std::string>& user_names() const { return user_names_; }

  // Answer of `user` on `item`: +1, -1, or 0 when not recorded.
  int answer(std::size_t user, std::size_t item) const {
    const auto& row = answers_[item];
    return user < row.size() ? row[user] : 0;
  }
  // Users who answered `item`, ascending.
  const std::vector<std::size_t>& answered_by(std::size_t item) const {
    return answered_by_[item];
  }

  bool has_labels() const { return labels_.has_value(); }
  // Distinct label strings, sorted; labels index into this.
  const std::vector<std::string>& label_names() const { return label_names_; }
  const std::vector<std::size_t>& labels() const { return *labels_; }

  ReplayOrder order = ReplayOrder::kWithReplacement;

  // Builders used by the CSV reader and by tests.
  std::size_t add_item(const std::string& name);
  std::size_t add_user(const std::string& name);
  void set_answer(std::size_t user, std::size_t item, int answer);
  void set_labels(std::vector<std::string> names, std::vector<std::size_t> labels);

 private:
  std::vector<std::string> item_names_;
  std::vector<std::string> user_names_;
  std::unordered_map<std::string, std::size_t> item_lookup_;
  std::unordered_map<std::string, std::size_t> user_lookup_;
  std::vector<std::vector<std::int8_t>> answers_;  // per item, indexed by user
  std::vector<std::vector<std::size_t>> answered_by_;
  std::size_t num_answers_ = 0;
  std::vector<std::string> label_names_;
  std::optional<std::vector<std::size_t>> labels_;
};

// Reads `item_id,label,user_id,answer` rows. Labels may be empty for every
// row (no ground truth) but not for some rows only. Throws ParseError with the
// offending line number.
ResponseLog ingest_responses(std::istream& in);
ResponseLog ingest_responses(const std::filesystem::path& path);

// Copies every item `copies` times (same users, same answers).
ResponseLog replicate(const ResponseLog& log, std::size_t copies);

struct LogSummary {
  std::size_t items = 0;
  std::size_t users = 0;
  std::size_t answers = 0;
  // Fraction of answers agreeing with the labels under the better of the
  // two label-to-answer orientations; needs exactly two labels.
  std::optional<double> label_agreement;
};

LogSummary summarize(const ResponseLog& log);

class ReplaySource final : public ResponseSource {
 public:
  ReplaySource(const ResponseLog& log, std::uint64_t seed);

  std::size_t num_items() const override { return log_.num_items(); }
  std::size_t num_questions() const override { return 1; }
  ResponseBatch answer(const SelectionEvent& event) override;

  // User revealed to round t.
  std::size_t draw_user(std::uint64_t t) const;

 private:
  const ResponseLog& log_;
  std::uint64_t seed_;
};

}  // namespace binclust
