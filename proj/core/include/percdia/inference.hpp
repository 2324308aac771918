#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "percdia/model.hpp"
#include "percdia/segments.hpp"

namespace percdia {

struct InferenceOptions {
  double activity_threshold = 0.5;   // >= keeps a frame active
  double existence_threshold = 0.5;  // >= keeps an attractor
  int64_t median_window = 11;        // 0 disables; used when scoring with a collar > 0
  int64_t subsample = 10;            // stacking stride for 23-dim base features
};

// Keeps attractor columns whose existence clears the threshold (original
// attractor indices are preserved in the speaker names) and binarizes the
// kept posteriors; comparisons are >= so a posterior of exactly 0.5 is active.
BinaryActivity posteriors_to_activity(const ForwardOutput& fwd, double activity_threshold = 0.5,
                                      double existence_threshold = 0.5);

// One-pass recursive median smoothing of a binary column: the left half of
// each window reads already-smoothed values, edges are extended by
// replicating the boundary samples. The output is a root signal, so a second
// application changes nothing. Window must be odd.
std::vector<uint8_t> median_filter(const std::vector<uint8_t>& column, int64_t window = 11);

void median_filter_inplace(BinaryActivity& activity, int64_t window = 11);

// Full-sequence forward (no cropping), post-processing chain, segments.
// 23-column inputs are stacked (+-7 context, `subsample` stride) first.
SegmentList infer_file(const ParamStore& params, const ModelConfig& cfg, const FeatureSequence& features,
                       const InferenceOptions& options = {});

// Number of attractors clearing the existence threshold.
int64_t predicted_speaker_count(const ForwardOutput& fwd, double existence_threshold = 0.5);

}  // namespace percdia
