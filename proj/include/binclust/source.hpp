#pragma once

#include <cstddef>
#include <cstdint>

#include "binclust/model.hpp"

namespace binclust {

// Where answers come from: a simulated model or a replayed response log.
class ResponseSource {
 public:
  virtual ~ResponseSource() = default;
  virtual std::size_t num_items() const = 0;
  virtual std::size_t num_questions() const = 0;
  // Answers of user `event.t` for every listed item.
  virtual ResponseBatch answer(const SelectionEvent& event) = 0;
};

class SimulatedSource final : public ResponseSource {
 public:
  SimulatedSource(const Model& model, std::uint64_t seed) : model_(model), seed_(seed) {}

  std::size_t num_items() const override { return model_.num_items(); }
  std::size_t num_questions() const override { return model_.num_questions(); }
  ResponseBatch answer(const SelectionEvent& event) override {
    return sample_answers(model_, event, seed_);
  }

 private:
  const Model& model_;
  std::uint64_t seed_;
};

}  // namespace binclust
