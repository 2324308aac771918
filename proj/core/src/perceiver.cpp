#include "percdia/perceiver.hpp"

#include <stdexcept>

#include "attention.hpp"

namespace percdia {
namespace {

constexpr double kProbClamp = 1e-7;

}  // namespace

AttractorSet decode(const Tensor& embeddings, const ParamStore& params, const DecoderConfig& cfg,
                    int64_t model_dim, const PassMode& mode) {
  if (embeddings.rows() < 1) throw std::invalid_argument("decode requires a nonempty embedding sequence");
  if (embeddings.cols() != model_dim) {
    throw std::invalid_argument("embedding dim " + std::to_string(embeddings.cols()) +
                                " does not match model_dim " + std::to_string(model_dim));
  }

  const Tensor& latents = params.get("decoder.latents");
  const Tensor& combine = params.get("decoder.combine");

  Tensor l = detail::cross_attention_sublayer(params, "decoder.init_ca", latents, embeddings,
                                              cfg.num_heads, cfg.attention_norm_axis, mode,
                                              cfg.initial_ca_residual_ln);

  auto read_out = [&](const Tensor& lat, AttractorSet& set) {
    Tensor attr = matmul(combine, lat);
    Tensor logits = linear(attr, params.get("decoder.exist.weight"), params.get("decoder.exist.bias"));
    set.per_block.push_back(attr);
    set.per_block_existence.push_back(sigmoid(logits));
  };

  AttractorSet set;
  for (int64_t b = 0; b < cfg.num_blocks; ++b) {
    const std::string prefix = "decoder.block" + std::to_string(b);
    Tensor ca = detail::cross_attention_sublayer(params, prefix + ".ca", l, embeddings, cfg.num_heads,
                                                 cfg.attention_norm_axis, mode, true);
    Tensor s1 = detail::transformer_layer(params, prefix + ".self1", ca, cfg.num_heads, mode);
    l = detail::transformer_layer(params, prefix + ".self2", s1, cfg.num_heads, mode);
    read_out(l, set);
  }
  set.attractors = set.per_block.back();
  set.existence = set.per_block_existence.back();
  return set;
}

Tensor entropy_loss(const Tensor& combine_weights) {
  const int64_t num_latents = combine_weights.cols();
  Tensor probs = clamp(softmax(combine_weights, 1), kProbClamp, 1.0 - kProbClamp);
  return scale(sum(mul(probs, log(probs))), 1.0 / static_cast<double>(num_latents));
}

}  // namespace percdia
