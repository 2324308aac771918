#pragma once

#include <string>
#include <utility>
#include <vector>

#include "percdia/config.hpp"
#include "percdia/features.hpp"
#include "percdia/frame_encoder.hpp"
#include "percdia/mode.hpp"
#include "percdia/params.hpp"
#include "percdia/perceiver.hpp"

namespace percdia {

// Full forward pass outputs: final activity posteriors plus every
// intermediate needed by the auxiliary losses (per-encoder-layer posteriors
// against the final attractors, final-embedding posteriors against each
// block's attractors).
struct ForwardOutput {
  Tensor posteriors;  // T x A in (0,1)
  Tensor existence;   // A x 1
  Tensor attractors;  // A x D
  std::vector<Tensor> per_layer_posteriors;   // L-1 entries, T x A
  std::vector<Tensor> per_block_posteriors;   // B-1 entries, T x A
  std::vector<Tensor> per_block_existence;    // B-1 entries, A x 1
  FrameEmbeddings embeddings;
};

ForwardOutput forward(const FeatureSequence& x, const ParamStore& params, const ModelConfig& cfg,
                      const PassMode& mode = PassMode::eval());

// Fresh parameters initialized from cfg.seed: attention/FF weights normal with
// std 1/sqrt(fan-in), biases zero, layer-norm gain one, latents std 1/sqrt(D),
// combination matrix std 1/sqrt(num_latents).
ParamStore init_params(const ModelConfig& cfg);

int64_t count_params(const ModelConfig& cfg);

struct CountBreakdown {
  std::vector<std::pair<std::string, int64_t>> by_module;  // (module, scalars)
  int64_t total = 0;
};
CountBreakdown count_params_breakdown(const ModelConfig& cfg);

// Checkpoint file: magic "DPCK", version byte, embedded run configuration,
// then per parameter (name, shape, f64 payload), all little-endian.
void save_checkpoint(const std::string& path, const RunConfig& config, const ParamStore& params);

struct Checkpoint {
  RunConfig config;
  ParamStore params;
};
Checkpoint load_checkpoint(const std::string& path);

// Arithmetic mean per parameter across checkpoints sharing one architecture.
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

}  // namespace percdia
