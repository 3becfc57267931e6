#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <vector>

#include "enserve/core/types.hpp"
#include "enserve/runtime/message.hpp"

namespace enserve {

// How per-model prediction blocks merge into the ensemble output.
struct CombinationRule {
  enum class Kind { averaging, majority_vote, weighted_averaging };

  Kind kind = Kind::averaging;
  std::vector<double> weights;  // weighted_averaging only, one per model

  static CombinationRule averaging() { return {Kind::averaging, {}}; }
  static CombinationRule majority_vote() { return {Kind::majority_vote, {}}; }
  // Weights must be nonnegative and sum to 1.
  static CombinationRule weighted(std::vector<double> weights);

  std::string name() const;
  static CombinationRule from_name(const std::string& name, int model_count);
};

// Run-scoped accumulator state: combines Data messages into the Y buffer.
//
// Blocks are staged per segment and folded in model-id order once the
// segment has heard from every model, so the result is the same no matter
// in which order messages arrive — bit for bit.
class PredictionAccumulator {
 public:
  PredictionAccumulator(std::size_t nb_samples, int output_width,
                        int model_count, int segment_size,
                        CombinationRule rule);

  // Throws ProtocolError on a duplicate {segment, model} pair or a block of
  // the wrong shape.
  void add(PredictionMessage msg);

  bool complete() const { return data_messages_ == expected_messages_; }
  std::size_t data_messages() const { return data_messages_; }
  std::size_t expected_messages() const { return expected_messages_; }

  const std::vector<float>& combined() const { return y_; }
  std::vector<float> take_combined() { return std::move(y_); }
  // Majority vote only: winning class per sample, lowest index on ties.
  const std::vector<int>& winners() const { return winners_; }
  std::vector<int> take_winners() { return std::move(winners_); }
  // Rows delivered per segment id.
  const std::vector<std::size_t>& segment_rows() const { return segment_rows_; }

  int output_width() const { return output_width_; }

 private:
  struct PendingSegment {
    std::vector<std::vector<float>> blocks;  // per model id, empty until seen
    int arrived = 0;
  };

  void fold_segment(int segment_id, PendingSegment& pending);

  std::size_t nb_samples_;
  int output_width_;
  int model_count_;
  int segment_size_;
  CombinationRule rule_;
  std::size_t segments_;
  std::size_t expected_messages_;
  std::size_t data_messages_ = 0;
  std::vector<float> y_;
  std::vector<int> winners_;
  std::vector<std::size_t> segment_rows_;
  std::map<int, PendingSegment> pending_;
  std::set<std::pair<int, int>> seen_;  // {segment, model}
};

}  // namespace enserve
