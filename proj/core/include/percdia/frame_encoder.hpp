#pragma once

#include <functional>
#include <vector>

#include "percdia/config.hpp"
#include "percdia/features.hpp"
#include "percdia/mode.hpp"
#include "percdia/params.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

// Outputs of the self-attention frame encoder: per_layer holds one T x D
// matrix per layer, the last entry equals final.
struct FrameEmbeddings {
  Tensor final;
  std::vector<Tensor> per_layer;
};

// Produces the A x D attractor matrix for a given embedding matrix; used for
// the per-layer activity conditioning. The full model wires the Perceiver
// decoder in here so conditioning shares its parameters.
using AttractorFn = std::function<Tensor(const Tensor& embeddings)>;

// Input projection followed by num_layers self-attention layers, each applied
// to the previous embeddings plus (optionally) the projected intermediate
// speaker activities. With conditioning disabled the decoder handle is unused
// and may be null.
FrameEmbeddings encode(const Tensor& features, const ParamStore& params, const EncoderConfig& cfg,
                       const AttractorFn& decoder, const PassMode& mode = PassMode::eval());

// One frame-encoder layer: LN -> MHSA (residual) -> LN -> FF (residual).
Tensor fr_enc_layer(const ParamStore& params, const std::string& layer_prefix, const Tensor& e,
                    int64_t num_heads, const PassMode& mode = PassMode::eval());

}  // namespace percdia
