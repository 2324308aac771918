#include "attention.hpp"

#include <cmath>

namespace percdia::detail {

void declare_layer_norm(const DeclareFn& fn, const std::string& prefix, int64_t dim) {
  fn(prefix + ".gain", Shape{dim}, "one");
  fn(prefix + ".bias", Shape{dim}, "zero");
}

void declare_mha(const DeclareFn& fn, const std::string& prefix, int64_t query_dim, int64_t kv_dim,
                 int64_t model_dim, int64_t num_heads) {
  const int64_t d = model_dim / num_heads;
  for (int64_t h = 0; h < num_heads; ++h) {
    const std::string hs = std::to_string(h);
    fn(prefix + ".q" + hs + ".weight", Shape{query_dim, d}, "fan_in");
    fn(prefix + ".q" + hs + ".bias", Shape{d}, "zero");
    fn(prefix + ".k" + hs + ".weight", Shape{kv_dim, d}, "fan_in");
    fn(prefix + ".k" + hs + ".bias", Shape{d}, "zero");
    fn(prefix + ".v" + hs + ".weight", Shape{kv_dim, d}, "fan_in");
    fn(prefix + ".v" + hs + ".bias", Shape{d}, "zero");
  }
  fn(prefix + ".out.weight", Shape{model_dim, model_dim}, "fan_in");
  fn(prefix + ".out.bias", Shape{model_dim}, "zero");
}

void declare_transformer_layer(const DeclareFn& fn, const std::string& prefix, int64_t model_dim,
                               int64_t num_heads, int64_t ff_dim) {
  declare_layer_norm(fn, prefix + ".ln1", model_dim);
  declare_mha(fn, prefix + ".mhsa", model_dim, model_dim, model_dim, num_heads);
  declare_layer_norm(fn, prefix + ".ln2", model_dim);
  fn(prefix + ".ff.w1", Shape{model_dim, ff_dim}, "fan_in");
  fn(prefix + ".ff.b1", Shape{ff_dim}, "zero");
  fn(prefix + ".ff.w2", Shape{ff_dim, model_dim}, "fan_in");
  fn(prefix + ".ff.b2", Shape{model_dim}, "zero");
}

void declare_cross_attention_sublayer(const DeclareFn& fn, const std::string& prefix, int64_t query_dim,
                                      int64_t kv_dim, int64_t model_dim, int64_t num_heads,
                                      bool residual_ln) {
  declare_mha(fn, prefix, query_dim, kv_dim, model_dim, num_heads);
  if (residual_ln) declare_layer_norm(fn, prefix + ".ln", model_dim);
}

Tensor multi_head_attention(const ParamStore& params, const std::string& prefix, const Tensor& queries,
                            const Tensor& keys_values, int64_t num_heads, AttentionNormAxis axis,
                            const PassMode& mode) {
  (void)mode;
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(num_heads));
  for (int64_t h = 0; h < num_heads; ++h) {
    const std::string hs = std::to_string(h);
    Tensor q = linear(queries, params.get(prefix + ".q" + hs + ".weight"), params.get(prefix + ".q" + hs + ".bias"));
    Tensor k = linear(keys_values, params.get(prefix + ".k" + hs + ".weight"), params.get(prefix + ".k" + hs + ".bias"));
    Tensor v = linear(keys_values, params.get(prefix + ".v" + hs + ".weight"), params.get(prefix + ".v" + hs + ".bias"));
    // 1/sqrt(d) folded into the (small) query matrix rather than the scores
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = matmul_nt(scale(q, inv_sqrt_d), k);
    AttentionNormAxis head_axis = axis;
    if (axis == AttentionNormAxis::kMixed) {
      head_axis = (h < num_heads / 2) ? AttentionNormAxis::kTime : AttentionNormAxis::kLatents;
    }
    // scores is queries x keys: axis 1 normalizes over keys, axis 0 over queries.
    Tensor attn = softmax(scores, head_axis == AttentionNormAxis::kTime ? 1 : 0);
    heads.push_back(matmul(attn, v));
  }
  Tensor cat = num_heads == 1 ? heads[0] : concat_cols(heads);
  return linear(cat, params.get(prefix + ".out.weight"), params.get(prefix + ".out.bias"));
}

Tensor transformer_layer(const ParamStore& params, const std::string& prefix, const Tensor& x,
                         int64_t num_heads, const PassMode& mode) {
  Tensor pre = layer_norm(x, params.get(prefix + ".ln1.gain"), params.get(prefix + ".ln1.bias"));
  Tensor attn =
      multi_head_attention(params, prefix + ".mhsa", pre, pre, num_heads, AttentionNormAxis::kTime, mode);
  Tensor mid = layer_norm(pre + maybe_dropout(attn, mode), params.get(prefix + ".ln2.gain"),
                          params.get(prefix + ".ln2.bias"));
  Tensor hidden = relu(linear(mid, params.get(prefix + ".ff.w1"), params.get(prefix + ".ff.b1")));
  Tensor ff = linear(hidden, params.get(prefix + ".ff.w2"), params.get(prefix + ".ff.b2"));
  return mid + maybe_dropout(ff, mode);
}

Tensor cross_attention_sublayer(const ParamStore& params, const std::string& prefix,
                                const Tensor& queries, const Tensor& keys_values, int64_t num_heads,
                                AttentionNormAxis axis, const PassMode& mode, bool residual_ln) {
  Tensor ca = multi_head_attention(params, prefix, queries, keys_values, num_heads, axis, mode);
  if (!residual_ln) return ca;
  return layer_norm(queries + maybe_dropout(ca, mode), params.get(prefix + ".ln.gain"),
                    params.get(prefix + ".ln.bias"));
}

}  // namespace percdia::detail
