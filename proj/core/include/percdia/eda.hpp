#pragma once

#include <cstdint>

#include "percdia/config.hpp"
#include "percdia/params.hpp"
#include "percdia/perceiver.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

// LSTM encoder-decoder attractor baseline (forward-only). Shares the frame
// encoder; used for runtime and parameter comparisons against the Perceiver
// decoder.
struct EdaConfig {
  int64_t hidden_dim = 256;
  int64_t max_attractors = 10;
  bool shuffle_frames = true;
  double existence_threshold = 0.5;

  void validate() const;
};

ParamStore init_eda_params(const EdaConfig& cfg, int64_t input_dim, uint64_t seed);

// Shuffles the frame order (seeded), runs the encoder LSTM over all frames,
// then the decoder LSTM on zero inputs from the encoder's final state,
// emitting one attractor per step while its existence stays at or above the
// threshold, up to max_attractors. Sequential in T by construction.
AttractorSet eda_decode(const Tensor& embeddings, const ParamStore& params, const EdaConfig& cfg,
                        uint64_t rng_seed);

// Learnable-scalar counts: the EDA module alone, and a full EEND-EDA style
// model (frame encoder without conditioning plus the EDA module).
int64_t count_eda_params(const EdaConfig& cfg, int64_t input_dim);
int64_t count_eda_model_params(const EncoderConfig& encoder, int64_t feature_dim, const EdaConfig& cfg);

}  // namespace percdia
