#include "enserve/runtime/combine.hpp"

#include <cmath>
#include <string>

namespace enserve {

CombinationRule CombinationRule::weighted(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0) throw SpecError("combination weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw SpecError("combination weights must sum to 1, got " +
                    std::to_string(sum));
  return {Kind::weighted_averaging, std::move(weights)};
}

std::string CombinationRule::name() const {
  switch (kind) {
    case Kind::averaging: return "avg";
    case Kind::majority_vote: return "vote";
    case Kind::weighted_averaging: return "wavg";
  }
  return "avg";
}

CombinationRule CombinationRule::from_name(const std::string& name,
                                           int model_count) {
  if (name == "avg") return averaging();
  if (name == "vote") return majority_vote();
  if (name == "wavg") {
    // Uniform weights unless the caller builds the rule explicitly.
    return weighted(std::vector<double>(model_count, 1.0 / model_count));
  }
  throw SpecError("unknown combination rule '" + name + "'");
}

PredictionAccumulator::PredictionAccumulator(std::size_t nb_samples,
                                             int output_width, int model_count,
                                             int segment_size,
                                             CombinationRule rule)
    : nb_samples_(nb_samples),
      output_width_(output_width),
      model_count_(model_count),
      segment_size_(segment_size),
      rule_(std::move(rule)),
      segments_(num_segments(nb_samples, segment_size)),
      expected_messages_(segments_ * static_cast<std::size_t>(model_count)),
      y_(nb_samples * static_cast<std::size_t>(output_width), 0.0f),
      segment_rows_(segments_, 0) {
  if (rule_.kind == CombinationRule::Kind::weighted_averaging &&
      rule_.weights.size() != static_cast<std::size_t>(model_count))
    throw SpecError("weighted averaging needs one weight per model");
  if (rule_.kind == CombinationRule::Kind::majority_vote)
    winners_.assign(nb_samples, -1);
}

void PredictionAccumulator::add(PredictionMessage msg) {
  if (!msg.is_data())
    throw ProtocolError("accumulator fed a control message");
  if (msg.segment_id >= static_cast<int>(segments_))
    throw ProtocolError("segment " + std::to_string(msg.segment_id) +
                        " out of range");
  if (msg.model_id < 0 || msg.model_id >= model_count_)
    throw ProtocolError("model " + std::to_string(msg.model_id) +
                        " out of range");
  Segment seg = segment_bounds(msg.segment_id, segment_size_, nb_samples_);
  if (msg.rows != seg.size() ||
      msg.block.size() != seg.size() * static_cast<std::size_t>(output_width_))
    throw ProtocolError("segment " + std::to_string(msg.segment_id) +
                        " block has the wrong shape");
  if (!seen_.insert({msg.segment_id, msg.model_id}).second)
    throw ProtocolError("segment " + std::to_string(msg.segment_id) +
                        " predicted twice by model " +
                        std::to_string(msg.model_id));

  segment_rows_[msg.segment_id] = seg.size();

  PendingSegment& pending = pending_[msg.segment_id];
  if (pending.blocks.empty()) pending.blocks.resize(model_count_);
  pending.blocks[msg.model_id] = std::move(msg.block);
  ++pending.arrived;
  ++data_messages_;

  if (pending.arrived == model_count_) {
    fold_segment(msg.segment_id, pending);
    pending_.erase(msg.segment_id);
  }
}

void PredictionAccumulator::fold_segment(int segment_id,
                                         PendingSegment& pending) {
  Segment seg = segment_bounds(segment_id, segment_size_, nb_samples_);
  std::size_t base = seg.start * static_cast<std::size_t>(output_width_);
  std::size_t count = seg.size() * static_cast<std::size_t>(output_width_);

  switch (rule_.kind) {
    case CombinationRule::Kind::averaging: {
      float inv = 1.0f / static_cast<float>(model_count_);
      for (int m = 0; m < model_count_; ++m)
        for (std::size_t i = 0; i < count; ++i)
          y_[base + i] += pending.blocks[m][i] * inv;
      break;
    }
    case CombinationRule::Kind::weighted_averaging: {
      for (int m = 0; m < model_count_; ++m) {
        float w = static_cast<float>(rule_.weights[m]);
        for (std::size_t i = 0; i < count; ++i)
          y_[base + i] += pending.blocks[m][i] * w;
      }
      break;
    }
    case CombinationRule::Kind::majority_vote: {
      int width = output_width_;
      for (int m = 0; m < model_count_; ++m) {
        const std::vector<float>& block = pending.blocks[m];
        for (std::size_t r = 0; r < seg.size(); ++r) {
          int best = 0;
          for (int c = 1; c < width; ++c)
            if (block[r * width + c] > block[r * width + best]) best = c;
          y_[base + r * width + best] += 1.0f;
        }
      }
      for (std::size_t r = 0; r < seg.size(); ++r) {
        std::size_t row = base + r * static_cast<std::size_t>(width);
        int best = 0;
        for (int c = 1; c < width; ++c)
          if (y_[row + c] > y_[row + best]) best = c;
        winners_[seg.start + r] = best;
      }
      break;
    }
  }
}

}  // namespace enserve
