#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "percdia/config.hpp"
#include "percdia/mode.hpp"
#include "percdia/params.hpp"
#include "percdia/tensor.hpp"

namespace percdia::detail {

inline Tensor maybe_dropout(const Tensor& x, const PassMode& mode) {
  return mode.training() ? dropout(x, mode.dropout, *mode.rng) : x;
}

// Every module declares its parameters once through declare_*; the same walk
// drives initialization, counting and checkpoint layout. init kinds:
// "fan_in" (normal, std 1/sqrt(rows)), "zero", "one", "latent" (std 1/sqrt(cols)),
// "combine" (std 1/sqrt(cols)).
using DeclareFn = std::function<void(const std::string&, const Shape&, const char*)>;

void declare_layer_norm(const DeclareFn& fn, const std::string& prefix, int64_t dim);
void declare_mha(const DeclareFn& fn, const std::string& prefix, int64_t query_dim, int64_t kv_dim,
                 int64_t model_dim, int64_t num_heads);
void declare_transformer_layer(const DeclareFn& fn, const std::string& prefix, int64_t model_dim,
                               int64_t num_heads, int64_t ff_dim);
void declare_cross_attention_sublayer(const DeclareFn& fn, const std::string& prefix, int64_t query_dim,
                                      int64_t kv_dim, int64_t model_dim, int64_t num_heads,
                                      bool residual_ln);

// Scaled dot-product attention over per-head projections. `axis` selects the
// softmax normalization of the queries x keys score matrix: kTime normalizes
// along keys (standard self-attention), kLatents along queries so each key
// spreads one unit of weight over the latents, kMixed uses kTime on the first
// half of the heads.
Tensor multi_head_attention(const ParamStore& params, const std::string& prefix, const Tensor& queries,
                            const Tensor& keys_values, int64_t num_heads, AttentionNormAxis axis,
                            const PassMode& mode);

// LN -> MHSA with residual -> LN -> position-wise FF (ReLU) with residual.
Tensor transformer_layer(const ParamStore& params, const std::string& prefix, const Tensor& x,
                         int64_t num_heads, const PassMode& mode);

// Cross-attention sub-layer; residual + layer norm when residual_ln is set.
Tensor cross_attention_sublayer(const ParamStore& params, const std::string& prefix,
                                const Tensor& queries, const Tensor& keys_values, int64_t num_heads,
                                AttentionNormAxis axis, const PassMode& mode, bool residual_ln);

}  // namespace percdia::detail
