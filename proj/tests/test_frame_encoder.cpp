#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "percdia/frame_encoder.hpp"
#include "percdia/grad_check.hpp"
#include "percdia/model.hpp"

using namespace percdia;

namespace {

ModelConfig tiny_config(bool conditioning = true) {
  ModelConfig cfg;
  cfg.feature_dim = 11;
  cfg.encoder.model_dim = 8;
  cfg.encoder.num_heads = 2;
  cfg.encoder.num_layers = 2;
  cfg.encoder.ff_dim = 16;
  cfg.encoder.dropout = 0.0;
  cfg.encoder.conditioning_enabled = conditioning;
  cfg.decoder.num_blocks = 2;
  cfg.decoder.num_latents = 4;
  cfg.decoder.num_attractors = 3;
  cfg.decoder.num_heads = 2;
  cfg.decoder.self_ff_dim = 12;
  cfg.seed = 5;
  return cfg;
}

Tensor permute_rows(const Tensor& x, const std::vector<int64_t>& perm) {
  Tensor out(x.shape());
  const int64_t cols = x.cols();
  for (size_t i = 0; i < perm.size(); ++i) {
    for (int64_t j = 0; j < cols; ++j) {
      out.raw()[static_cast<int64_t>(i) * cols + j] = x(perm[i], j);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("per-layer output shapes") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(1);
  Tensor features = Tensor::randn(Shape{9, cfg.feature_dim}, rng, 1.0);
  AttractorFn decoder = [&](const Tensor& e) {
    return decode(e, params, cfg.decoder, cfg.encoder.model_dim).attractors;
  };
  FrameEmbeddings emb = encode(features, params, cfg.encoder, decoder);
  REQUIRE(emb.per_layer.size() == 2);
  for (const Tensor& e : emb.per_layer) {
    CHECK(e.rows() == 9);
    CHECK(e.cols() == cfg.encoder.model_dim);
  }
  for (int64_t i = 0; i < emb.final.size(); ++i) CHECK(emb.final[i] == emb.per_layer.back()[i]);
}

TEST_CASE("conditioning disabled is independent of decoder parameters") {
  ModelConfig cfg = tiny_config(false);
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(2);
  Tensor features = Tensor::randn(Shape{7, cfg.feature_dim}, rng, 1.0);
  FrameEmbeddings a = encode(features, params, cfg.encoder, nullptr);
  // perturb every decoder parameter
  params.for_each([](const std::string& name, Tensor& t) {
    if (name.rfind("decoder.", 0) == 0) {
      for (double& v : t.raw()) v += 0.5;
    }
  });
  FrameEmbeddings b = encode(features, params, cfg.encoder, nullptr);
  for (int64_t i = 0; i < a.final.size(); ++i) CHECK(a.final[i] == b.final[i]);
}

TEST_CASE("zero conditioning projection equals conditioning disabled") {
  ModelConfig cfg = tiny_config(true);
  ParamStore params = init_params(cfg);
  std::fill(params.get("encoder.wc").raw().begin(), params.get("encoder.wc").raw().end(), 0.0);
  std::mt19937_64 rng(3);
  Tensor features = Tensor::randn(Shape{6, cfg.feature_dim}, rng, 1.0);
  AttractorFn decoder = [&](const Tensor& e) {
    return decode(e, params, cfg.decoder, cfg.encoder.model_dim).attractors;
  };
  FrameEmbeddings with = encode(features, params, cfg.encoder, decoder);
  EncoderConfig off = cfg.encoder;
  off.conditioning_enabled = false;
  FrameEmbeddings without = encode(features, params, off, nullptr);
  for (int64_t i = 0; i < with.final.size(); ++i) {
    CHECK(with.final[i] == doctest::Approx(without.final[i]).epsilon(1e-12));
  }
}

TEST_CASE("single frame attention weight is exactly one") {
  // With T=1 the attention output must equal the (projected) single value row,
  // independent of the key content: softmax over a singleton is [1].
  ModelConfig cfg = tiny_config(false);
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(4);
  Tensor one_frame = Tensor::randn(Shape{1, cfg.feature_dim}, rng, 1.0);
  FrameEmbeddings emb = encode(one_frame, params, cfg.encoder, nullptr);
  CHECK(emb.final.rows() == 1);
  for (int64_t i = 0; i < emb.final.size(); ++i) CHECK(std::isfinite(emb.final[i]));
}

TEST_CASE("time-permutation equivariance") {
  ModelConfig cfg = tiny_config(true);
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(6);
  const int64_t t = 12;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor features = Tensor::randn(Shape{t, cfg.feature_dim}, rng, 1.0);
    std::vector<int64_t> perm(static_cast<size_t>(t));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    AttractorFn decoder = [&](const Tensor& e) {
      return decode(e, params, cfg.decoder, cfg.encoder.model_dim).attractors;
    };
    Tensor out = encode(features, params, cfg.encoder, decoder).final;
    Tensor out_perm = encode(permute_rows(features, perm), params, cfg.encoder, decoder).final;
    Tensor expect = permute_rows(out, perm);
    for (int64_t i = 0; i < out.size(); ++i) {
      CHECK(std::abs(out_perm[i] - expect[i]) < 1e-9);
    }
  }
}

TEST_CASE("gradient check through one layer") {
  ModelConfig cfg = tiny_config(false);
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(7);
  Tensor e = Tensor::randn(Shape{5, cfg.encoder.model_dim}, rng, 1.0);
  Tensor w = Tensor::randn(Shape{5, cfg.encoder.model_dim}, rng, 1.0);
  auto f = [&] { return sum(mul(fr_enc_layer(params, "encoder.layer0", e, cfg.encoder.num_heads), w)); };
  GradCheckReport report = grad_check(f, params, 1e-6, 60);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("encode with conditioning is differentiable end to end") {
  ModelConfig cfg = tiny_config(true);
  ParamStore params = init_params(cfg);
  std::mt19937_64 rng(8);
  Tensor features = Tensor::randn(Shape{5, cfg.feature_dim}, rng, 1.0);
  Tensor w = Tensor::randn(Shape{5, cfg.encoder.model_dim}, rng, 1.0);
  AttractorFn decoder = [&](const Tensor& e) {
    return decode(e, params, cfg.decoder, cfg.encoder.model_dim).attractors;
  };
  auto f = [&] { return sum(mul(encode(features, params, cfg.encoder, decoder).final, w)); };
  GradCheckReport report = grad_check(f, params, 1e-6, 25, 1);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("feature dimension mismatch raises") {
  ModelConfig cfg = tiny_config(false);
  ParamStore params = init_params(cfg);
  Tensor wrong(Shape{4, cfg.feature_dim + 1});
  CHECK_THROWS_AS(encode(wrong, params, cfg.encoder, nullptr), std::invalid_argument);
}
