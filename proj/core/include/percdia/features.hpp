#pragma once

#include <cstdint>
#include <string>

#include "percdia/tensor.hpp"

namespace percdia {

// T x F acoustic (or synthetic) feature matrix at frame_period_s resolution.
struct FeatureSequence {
  Tensor features;  // T x F
  double frame_period_s = 0.1;
  std::string recording_id;

  int64_t num_frames() const { return features.rows(); }
  int64_t dim() const { return features.cols(); }
};

// Stacks +-7 base frames (15 total) of 23-dimensional filterbank-style rows
// sampled every 10 ms, taking one output frame every `subsample` base frames.
// Out-of-range context rows are zero. Output length is ceil(T0 / subsample).
FeatureSequence stack_features(const Tensor& base, int64_t subsample = 10,
                               const std::string& recording_id = "");

constexpr int64_t kStackContext = 7;      // symmetric context radius
constexpr int64_t kStackBaseDim = 23;     // required base feature dimension
constexpr double kBaseFramePeriodS = 0.01;

// DPFT binary format: magic "DPFT", one version byte, u32 T, u32 F,
// then T*F little-endian f32 values, row-major.
void write_dpft(const std::string& path, const FeatureSequence& fs);
FeatureSequence read_dpft(const std::string& path, double frame_period_s = 0.1);

}  // namespace percdia
