#include "binclust/response_log.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <set>

#include "binclust/error.hpp"
#include "binclust/rng.hpp"

namespace binclust {

namespace {

constexpr std::uint64_t kStreamUser = 11;
constexpr std::uint64_t kStreamRedraw = 12;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

ParseError line_error(std::size_t line_no, const std::string& what) {
  return ParseError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::size_t ResponseLog::add_item(const std::string& name) {
  const auto [it, inserted] = item_lookup_.try_emplace(name, item_names_.size());
  if (inserted) {
    item_names_.push_back(name);
    answers_.emplace_back();
    answered_by_.emplace_back();
  }
  return it->second;
}

std::size_t ResponseLog::add_user(const std::string& name) {
  const auto [it, inserted] = user_lookup_.try_emplace(name, user_names_.size());
  if (inserted) user_names_.push_back(name);
  return it->second;
}

void ResponseLog::set_answer(std::size_t user, std::size_t item, int answer) {
  if (user >= num_users() || item >= num_items()) throw StructureError("answer id out of range");
  if (answer != 1 && answer != -1) throw StructureError("answers must be +1 or -1");
  auto& row = answers_[item];
  if (row.size() <= user) row.resize(user + 1, 0);
  if (row[user] == 0) {
    ++num_answers_;
    auto& who = answered_by_[item];
    who.insert(std::upper_bound(who.begin(), who.end(), user), user);
  }
  row[user] = static_cast<std::int8_t>(answer);
}

void ResponseLog::set_labels(std::vector<std::string> names, std::vector<std::size_t> labels) {
  if (labels.size() != num_items()) throw StructureError("one label per item expected");
  for (std::size_t v : labels) {
    if (v >= names.size()) throw StructureError("label index out of range");
  }
  label_names_ = std::move(names);
  labels_ = std::move(labels);
}

ResponseLog ingest_responses(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || trim(line) != "item_id,label,user_id,answer") {
    throw ParseError("line 1: expected header item_id,label,user_id,answer");
  }
  ++line_no;

  ResponseLog log;
  std::map<std::size_t, std::string> item_label;
  std::optional<bool> labelled;
  bool seen_minus = false;
  bool seen_zero = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 4) throw line_error(line_no, "expected 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw line_error(line_no, "empty item_id");
    if (f[2].empty()) throw line_error(line_no, "empty user_id");

    const bool has_label = !f[1].empty();
    if (labelled && *labelled != has_label) {
      throw line_error(line_no, "labels must be given for every row or for none");
    }
    labelled = has_label;

    int answer = 0;
    if (f[3] == "+1" || f[3] == "1") {
      answer = 1;
    } else if (f[3] == "-1") {
      answer = -1;
      seen_minus = true;
    } else if (f[3] == "0") {
      seen_zero = true;
    } else {
      throw line_error(line_no, "answer must be +1 or -1, got '" + f[3] + "'");
    }
    if (seen_zero && seen_minus) throw line_error(line_no, "mixed answer alphabets (0 and -1)");
    if (answer == 0) throw line_error(line_no, "answer 0 is not accepted; answers are +1 or -1");

    const std::size_t item = log.add_item(f[0]);
    const std::size_t user = log.add_user(f[2]);
    if (log.answer(user, item) != 0) {
      throw line_error(line_no, "user '" + f[2] + "' answered item '" + f[0] + "' twice");
    }
    log.set_answer(user, item, answer);

    if (has_label) {
      auto [lit, lnew] = item_label.try_emplace(item, f[1]);
      if (!lnew && lit->second != f[1]) {
        throw line_error(line_no, "item '" + f[0] + "' has conflicting labels");
      }
    }
  }
  if (log.num_answers() == 0) throw ParseError("response log has no rows");
  if (labelled && *labelled) {
    std::set<std::string> distinct;
    for (const auto& [item, label] : item_label) distinct.insert(label);
    std::vector<std::string> names(distinct.begin(), distinct.end());
    std::vector<std::size_t> labels(log.num_items());
    for (const auto& [item, label] : item_label) {
      labels[item] = static_cast<std::size_t>(
          std::lower_bound(names.begin(), names.end(), label) - names.begin());
    }
    log.set_labels(std::move(names), std::move(labels));
  }
  return log;
}

ResponseLog ingest_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open response log " + path.string());
  return ingest_responses(in);
}

ResponseLog replicate(const ResponseLog& log, std::size_t copies) {
  if (copies == 0) throw StructureError("replication count must be positive");
  ResponseLog out;
  out.order = log.order;
  for (std::size_t c = 0; c < copies; ++c) {
    for (const auto& name : log.item_names()) {
      out.add_item(copies == 1 ? name : name + "#" + std::to_string(c));
    }
  }
  for (const auto& name : log.user_names()) out.add_user(name);
  const std::size_t n = log.num_items();
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t u : log.answered_by(i)) out.set_answer(u, c * n + i, log.answer(u, i));
    }
  }
  if (log.has_labels()) {
    std::vector<std::size_t> labels;
    labels.reserve(n * copies);
    for (std::size_t c = 0; c < copies; ++c) {
      labels.insert(labels.end(), log.labels().begin(), log.labels().end());
    }
    out.set_labels(log.label_names(), std::move(labels));
  }
  return out;
}

LogSummary summarize(const ResponseLog& log) {
  LogSummary s{log.num_items(), log.num_users(), log.num_answers(), std::nullopt};
  if (!log.has_labels() || log.label_names().size() != 2 || log.num_answers() == 0) return s;
  // Orientation: label 0 <-> +1.
  std::size_t agree = 0;
  for (std::size_t i = 0; i < log.num_items(); ++i) {
    const int expected = log.labels()[i] == 0 ? 1 : -1;
    for (std::size_t u : log.answered_by(i)) agree += log.answer(u, i) == expected ? 1 : 0;
  }
  const double a = static_cast<double>(agree) / static_cast<double>(log.num_answers());
  s.label_agreement = std::max(a, 1.0 - a);
  return s;
}

ReplaySource::ReplaySource(const ResponseLog& log, std::uint64_t seed) : log_(log), seed_(seed) {
  if (log.num_users() == 0 || log.num_items() == 0) throw StructureError("empty response log");
  for (std::size_t i = 0; i < log.num_items(); ++i) {
    if (log.answered_by(i).empty()) {
      throw StructureError("item '" + log.item_names()[i] + "' has no recorded answers");
    }
  }
}

std::size_t ReplaySource::draw_user(std::uint64_t t) const {
  if (log_.order == ReplayOrder::kSequential) {
    if (t == 0 || t > log_.num_users()) {
      throw SourceExhausted("sequential replay ran out of users at round " + std::to_string(t));
    }
    return static_cast<std::size_t>(t - 1);
  }
  return rng::uniform_index(log_.num_users(), seed_, t, kStreamUser);
}

ResponseBatch ReplaySource::answer(const SelectionEvent& event) {
  if (event.question != 0) throw StructureError("replayed logs carry a single question");
  const std::size_t user = draw_user(event.t);
  ResponseBatch batch{event, {}};
  batch.answers.reserve(event.items.size());
  for (std::size_t item : event.items) {
    if (item >= log_.num_items()) throw StructureError("item id out of range");
    int a = log_.answer(user, item);
    if (a == 0) {
      const auto& who = log_.answered_by(item);
      a = log_.answer(who[rng::uniform_index(who.size(), seed_, event.t, kStreamRedraw, item)], item);
    }
    batch.answers.push_back(a);
  }
  return batch;
}

}  // namespace binclust
