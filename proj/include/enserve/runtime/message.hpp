#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enserve/core/errors.hpp"

namespace enserve {

// Immutable block of nb_samples feature vectors, readable by every worker.
class SampleStore {
 public:
  SampleStore() = default;
  SampleStore(std::vector<float> data, std::size_t nb_samples,
              std::size_t width)
      : data_(std::move(data)), nb_samples_(nb_samples), width_(width) {
    if (data_.size() != nb_samples_ * width_)
      throw SpecError("sample store size does not match nb_samples * width");
  }

  std::size_t nb_samples() const { return nb_samples_; }
  std::size_t width() const { return width_; }

  std::span<const float> rows(std::size_t start, std::size_t count) const {
    return std::span<const float>(data_).subspan(start * width_,
                                                 count * width_);
  }

 private:
  std::vector<float> data_;
  std::size_t nb_samples_ = 0;
  std::size_t width_ = 0;
};

// A contiguous run of samples handed to a predictor, with its global
// position so deterministic backends can key on absolute sample indices.
struct SampleView {
  std::span<const float> features;  // rows * width values
  std::size_t first_index = 0;
  std::size_t rows = 0;
  std::size_t width = 0;
};

// The triplet {s, m, P} put on the prediction queue, plus the two control
// sentinels: s == -1 flags an out-of-memory worker, s == -2 a ready worker.
struct PredictionMessage {
  static constexpr int kOom = -1;
  static constexpr int kReady = -2;

  int segment_id = 0;
  int model_id = -1;
  std::size_t rows = 0;
  std::vector<float> block;  // rows x C, row-major

  bool is_data() const { return segment_id >= 0; }
  bool is_oom() const { return segment_id == kOom; }
  bool is_ready() const { return segment_id == kReady; }

  static PredictionMessage oom() { return {kOom, -1, 0, {}}; }
  static PredictionMessage ready() { return {kReady, -1, 0, {}}; }
  static PredictionMessage data(int segment_id, int model_id, std::size_t rows,
                                std::vector<float> block) {
    return {segment_id, model_id, rows, std::move(block)};
  }
};

}  // namespace enserve
