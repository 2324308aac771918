#include "percdia/frame_encoder.hpp"

#include <stdexcept>

#include "attention.hpp"

namespace percdia {

Tensor fr_enc_layer(const ParamStore& params, const std::string& layer_prefix, const Tensor& e,
                    int64_t num_heads, const PassMode& mode) {
  return detail::transformer_layer(params, layer_prefix, e, num_heads, mode);
}

FrameEmbeddings encode(const Tensor& features, const ParamStore& params, const EncoderConfig& cfg,
                       const AttractorFn& decoder, const PassMode& mode) {
  if (features.cols() != params.get("encoder.input.weight").rows()) {
    throw std::invalid_argument("feature dimension " + std::to_string(features.cols()) +
                                " does not match encoder input weight");
  }
  if (cfg.conditioning_enabled && !decoder) {
    throw std::invalid_argument("conditioning enabled but no attractor decoder supplied");
  }

  Tensor e = linear(features, params.get("encoder.input.weight"), params.get("encoder.input.bias"));

  FrameEmbeddings out;
  out.per_layer.reserve(static_cast<size_t>(cfg.num_layers));
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    Tensor layer_in = e;
    if (cfg.conditioning_enabled) {
      Tensor attr = decoder(e);  // A x D, shared Perceiver parameters
      Tensor intermediate_activity = sigmoid(matmul_nt(e, attr));
      Tensor condition = matmul(matmul(intermediate_activity, attr), params.get("encoder.wc"));
      layer_in = e + condition;
    }
    e = fr_enc_layer(params, "encoder.layer" + std::to_string(l), layer_in, cfg.num_heads, mode);
    out.per_layer.push_back(e);
  }
  out.final = e;
  return out;
}

}  // namespace percdia
