#pragma once

#include <vector>

#include "percdia/config.hpp"
#include "percdia/mode.hpp"
#include "percdia/params.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

// Attractors decoded from a frame-embedding sequence. per_block holds the
// A x D attractor matrix read out after every Perceiver block (the last entry
// equals attractors); per_block_existence the matching existence posteriors
// (A x 1 columns), produced by the shared combination matrix and existence
// head applied to every block output.
struct AttractorSet {
  Tensor attractors;  // A x D
  Tensor existence;   // A x 1, strictly in (0,1)
  std::vector<Tensor> per_block;
  std::vector<Tensor> per_block_existence;
};

// Latents cross-attend to the frame embeddings, then each block applies
// cross-attention followed by two self-attention layers among the latents;
// attractors are the learned linear combination of the final latents.
AttractorSet decode(const Tensor& embeddings, const ParamStore& params, const DecoderConfig& cfg,
                    int64_t model_dim, const PassMode& mode = PassMode::eval());

// Sum over attractors of mean(softmax(w_a) * log softmax(w_a)) for the rows of
// the latent-combination matrix. Always <= 0; minimized exactly when every row
// is constant, at -A*log(N)/N.
Tensor entropy_loss(const Tensor& combine_weights);

}  // namespace percdia
