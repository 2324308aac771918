#include "percdia/eda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "attention.hpp"

namespace percdia {
namespace {

// Gate order in the packed 4H layout: input, forget, candidate, output.
struct LstmCell {
  const double* wx;  // in x 4H
  const double* wh;  // H x 4H
  const double* b;   // 4H
  int64_t in_dim;
  int64_t hidden;

  void step(const double* x, std::vector<double>& h, std::vector<double>& c,
            std::vector<double>& gates) const {
    const int64_t g4 = 4 * hidden;
    for (int64_t j = 0; j < g4; ++j) gates[static_cast<size_t>(j)] = b[j];
    if (x != nullptr) {
      for (int64_t i = 0; i < in_dim; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = wx + i * g4;
        for (int64_t j = 0; j < g4; ++j) gates[static_cast<size_t>(j)] += xi * row[j];
      }
    }
    for (int64_t i = 0; i < hidden; ++i) {
      const double hi = h[static_cast<size_t>(i)];
      if (hi == 0.0) continue;
      const double* row = wh + i * g4;
      for (int64_t j = 0; j < g4; ++j) gates[static_cast<size_t>(j)] += hi * row[j];
    }
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (int64_t i = 0; i < hidden; ++i) {
      const double ig = sig(gates[static_cast<size_t>(i)]);
      const double fg = sig(gates[static_cast<size_t>(hidden + i)]);
      const double gg = std::tanh(gates[static_cast<size_t>(2 * hidden + i)]);
      const double og = sig(gates[static_cast<size_t>(3 * hidden + i)]);
      c[static_cast<size_t>(i)] = fg * c[static_cast<size_t>(i)] + ig * gg;
      h[static_cast<size_t>(i)] = og * std::tanh(c[static_cast<size_t>(i)]);
    }
  }
};

void declare_eda(const detail::DeclareFn& fn, const EdaConfig& cfg, int64_t input_dim) {
  const int64_t h = cfg.hidden_dim;
  fn("eda.enc.wx", Shape{input_dim, 4 * h}, "fan_in");
  fn("eda.enc.wh", Shape{h, 4 * h}, "fan_in");
  fn("eda.enc.b", Shape{4 * h}, "lstm_bias");
  fn("eda.dec.wx", Shape{h, 4 * h}, "fan_in");
  fn("eda.dec.wh", Shape{h, 4 * h}, "fan_in");
  fn("eda.dec.b", Shape{4 * h}, "lstm_bias");
  fn("eda.exist.weight", Shape{h, 1}, "fan_in");
  fn("eda.exist.bias", Shape{1}, "zero");
}

}  // namespace

void EdaConfig::validate() const {
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (max_attractors < 1) throw std::invalid_argument("max_attractors must be >= 1");
}

ParamStore init_eda_params(const EdaConfig& cfg, int64_t input_dim, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  const int64_t h = cfg.hidden_dim;
  declare_eda(
      [&](const std::string& name, const Shape& shape, const char* kind) {
        Tensor t(shape);
        const std::string k = kind;
        if (k == "fan_in") {
          t = Tensor::randn(shape, rng, 1.0 / std::sqrt(static_cast<double>(shape[0])));
        } else if (k == "lstm_bias") {
          // forget-gate bias 1, everything else 0
          std::span<double> v = t.raw();
          for (int64_t i = h; i < 2 * h; ++i) v[static_cast<size_t>(i)] = 1.0;
        }
        store.add(name, std::move(t));
      },
      cfg, input_dim);
  return store;
}

AttractorSet eda_decode(const Tensor& embeddings, const ParamStore& params, const EdaConfig& cfg,
                        uint64_t rng_seed) {
  const int64_t t = embeddings.rows();
  const int64_t d = embeddings.cols();
  const int64_t hidden = cfg.hidden_dim;

  std::vector<int64_t> order(static_cast<size_t>(t));
  std::iota(order.begin(), order.end(), 0);
  if (cfg.shuffle_frames) {
    std::mt19937_64 rng(rng_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  LstmCell enc{params.get("eda.enc.wx").values().data(), params.get("eda.enc.wh").values().data(),
               params.get("eda.enc.b").values().data(), d, hidden};
  LstmCell dec{params.get("eda.dec.wx").values().data(), params.get("eda.dec.wh").values().data(),
               params.get("eda.dec.b").values().data(), hidden, hidden};

  std::vector<double> h(static_cast<size_t>(hidden), 0.0), c(static_cast<size_t>(hidden), 0.0);
  std::vector<double> gates(static_cast<size_t>(4 * hidden));
  const double* emb = embeddings.values().data();
  for (int64_t i = 0; i < t; ++i) enc.step(emb + order[static_cast<size_t>(i)] * d, h, c, gates);

  const double* we = params.get("eda.exist.weight").values().data();
  const double be = params.get("eda.exist.bias").values()[0];

  std::vector<double> attractors;
  std::vector<double> existence;
  for (int64_t a = 0; a < cfg.max_attractors; ++a) {
    dec.step(nullptr, h, c, gates);  // zero input vector
    double logit = be;
    for (int64_t i = 0; i < hidden; ++i) logit += h[static_cast<size_t>(i)] * we[i];
    const double p = 1.0 / (1.0 + std::exp(-logit));
    if (p < cfg.existence_threshold) break;
    attractors.insert(attractors.end(), h.begin(), h.end());
    existence.push_back(p);
  }

  AttractorSet set;
  const int64_t found = static_cast<int64_t>(existence.size());
  set.attractors = Tensor(Shape{found, hidden}, std::move(attractors));
  set.existence = Tensor(Shape{found, 1}, std::move(existence));
  set.per_block = {set.attractors};
  set.per_block_existence = {set.existence};
  return set;
}

int64_t count_eda_params(const EdaConfig& cfg, int64_t input_dim) {
  int64_t total = 0;
  declare_eda([&](const std::string&, const Shape& shape, const char*) { total += shape_size(shape); },
              cfg, input_dim);
  return total;
}

int64_t count_eda_model_params(const EncoderConfig& encoder, int64_t feature_dim, const EdaConfig& cfg) {
  int64_t total = 0;
  detail::DeclareFn count = [&](const std::string&, const Shape& shape, const char*) {
    total += shape_size(shape);
  };
  count("encoder.input.weight", Shape{feature_dim, encoder.model_dim}, "fan_in");
  count("encoder.input.bias", Shape{encoder.model_dim}, "zero");
  for (int64_t l = 0; l < encoder.num_layers; ++l) {
    detail::declare_transformer_layer(count, "encoder.layer" + std::to_string(l), encoder.model_dim,
                                      encoder.num_heads, encoder.ff_dim);
  }
  total += count_eda_params(cfg, encoder.model_dim);
  return total;
}

}  // namespace percdia
