#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "percdia/features.hpp"
#include "percdia/segments.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

// Simulated-conversation generation: alternating speaker turns with
// exponential pause/turn lengths, optional overlaps, and synthetic
// speaker-signature features standing in for filterbank features.
struct ScConfig {
  int64_t min_speakers = 2;
  int64_t max_speakers = 2;
  double duration_s = 120.0;
  double pause_mean_s = 1.0;
  double overlap_prob = 0.2;
  double turn_mean_s = 2.5;
  int64_t feature_dim = 345;
  double signature_scale = 1.0;
  double noise_std = 0.1;
  double frame_period_s = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

struct SimRecording {
  std::string recording_id;
  FeatureSequence features;
  ReferenceLabels labels;
  Tensor signatures;  // S x F unit rows; empty after a disk round trip
};

ReferenceLabels generate_labels(const ScConfig& cfg, std::mt19937_64& rng);

// Unit-norm signatures with pairwise |cos| < 0.5 enforced by rejection.
Tensor sample_signatures(int64_t num_speakers, int64_t feature_dim, std::mt19937_64& rng);

// frame = signature_scale * sum(active signatures) + N(0, noise_std^2);
// silence frames are pure noise. Values are quantized to f32 so the DPFT
// round trip is lossless.
FeatureSequence synth_features(const ReferenceLabels& labels, const Tensor& signatures,
                               const ScConfig& cfg, std::mt19937_64& rng);

SimRecording generate_recording(const ScConfig& cfg, const std::string& recording_id, uint64_t seed);

// Dataset bundle on disk: one DPFT + one RTTM per recording plus a
// tab-separated manifest (id, feature path, rttm path).
std::string write_dataset(const std::string& dir, const std::vector<SimRecording>& recordings);
std::vector<SimRecording> read_dataset(const std::string& manifest_path);

}  // namespace percdia
