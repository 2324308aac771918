#include "percdia/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "attention.hpp"

namespace percdia {
namespace {

using detail::DeclareFn;

void declare_params(const ModelConfig& cfg, const DeclareFn& fn) {
  const int64_t d = cfg.encoder.model_dim;
  fn("encoder.input.weight", Shape{cfg.feature_dim, d}, "fan_in");
  fn("encoder.input.bias", Shape{d}, "zero");
  for (int64_t l = 0; l < cfg.encoder.num_layers; ++l) {
    detail::declare_transformer_layer(fn, "encoder.layer" + std::to_string(l), d,
                                      cfg.encoder.num_heads, cfg.encoder.ff_dim);
  }
  if (cfg.encoder.conditioning_enabled) fn("encoder.wc", Shape{d, d}, "fan_in");

  fn("decoder.latents", Shape{cfg.decoder.num_latents, d}, "latent");
  detail::declare_cross_attention_sublayer(fn, "decoder.init_ca", d, d, d, cfg.decoder.num_heads,
                                           cfg.decoder.initial_ca_residual_ln);
  const int64_t self_ff = cfg.decoder.resolved_self_ff_dim(d);
  for (int64_t b = 0; b < cfg.decoder.num_blocks; ++b) {
    const std::string prefix = "decoder.block" + std::to_string(b);
    detail::declare_cross_attention_sublayer(fn, prefix + ".ca", d, d, d, cfg.decoder.num_heads, true);
    detail::declare_transformer_layer(fn, prefix + ".self1", d, cfg.decoder.num_heads, self_ff);
    detail::declare_transformer_layer(fn, prefix + ".self2", d, cfg.decoder.num_heads, self_ff);
  }
  fn("decoder.combine", Shape{cfg.decoder.num_attractors, cfg.decoder.num_latents}, "combine");
  fn("decoder.exist.weight", Shape{d, 1}, "fan_in");
  fn("decoder.exist.bias", Shape{1}, "zero");
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParamStore store;
  declare_params(cfg, [&](const std::string& name, const Shape& shape, const char* kind) {
    Tensor t(shape);
    const std::string k = kind;
    if (k == "one") {
      std::fill(t.raw().begin(), t.raw().end(), 1.0);
    } else if (k == "fan_in") {
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      t = Tensor::randn(shape, rng, std_dev);
    } else if (k == "latent" || k == "combine") {
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      t = Tensor::randn(shape, rng, std_dev);
    }  // "zero": already zero-filled
    t.set_requires_grad(true);
    store.add(name, std::move(t));
  });
  return store;
}

int64_t count_params(const ModelConfig& cfg) {
  int64_t total = 0;
  declare_params(cfg, [&](const std::string&, const Shape& shape, const char*) {
    total += shape_size(shape);
  });
  return total;
}

CountBreakdown count_params_breakdown(const ModelConfig& cfg) {
  CountBreakdown out;
  auto bump = [&](const std::string& module, int64_t n) {
    for (auto& [name, count] : out.by_module) {
      if (name == module) {
        count += n;
        return;
      }
    }
    out.by_module.emplace_back(module, n);
  };
  declare_params(cfg, [&](const std::string& name, const Shape& shape, const char*) {
    const int64_t n = shape_size(shape);
    out.total += n;
    size_t second_dot = name.find('.', name.find('.') + 1);
    std::string module = name.substr(0, second_dot);
    bump(module, n);
  });
  return out;
}

ForwardOutput forward(const FeatureSequence& x, const ParamStore& params, const ModelConfig& cfg,
                      const PassMode& mode) {
  if (x.dim() != cfg.feature_dim) {
    throw std::invalid_argument("feature dim " + std::to_string(x.dim()) + " does not match config " +
                                std::to_string(cfg.feature_dim));
  }
  const int64_t d = cfg.encoder.model_dim;
  AttractorFn conditioning = [&](const Tensor& emb) {
    return decode(emb, params, cfg.decoder, d, mode).attractors;
  };

  ForwardOutput out;
  out.embeddings = encode(x.features, params, cfg.encoder,
                          cfg.encoder.conditioning_enabled ? conditioning : AttractorFn{}, mode);
  AttractorSet attr = decode(out.embeddings.final, params, cfg.decoder, d, mode);
  out.attractors = attr.attractors;
  out.existence = attr.existence;
  out.posteriors = sigmoid(matmul_nt(out.embeddings.final, attr.attractors));
  for (int64_t l = 0; l + 1 < cfg.encoder.num_layers; ++l) {
    out.per_layer_posteriors.push_back(
        sigmoid(matmul_nt(out.embeddings.per_layer[static_cast<size_t>(l)], attr.attractors)));
  }
  for (int64_t b = 0; b + 1 < cfg.decoder.num_blocks; ++b) {
    out.per_block_posteriors.push_back(
        sigmoid(matmul_nt(out.embeddings.final, attr.per_block[static_cast<size_t>(b)])));
    out.per_block_existence.push_back(attr.per_block_existence[static_cast<size_t>(b)]);
  }
  return out;
}

void save_checkpoint(const std::string& path, const RunConfig& config, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("DPCK", 4);
  const char version = 1;
  out.write(&version, 1);
  const std::string cfg_text = config.serialize();
  write_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  write_u32(out, static_cast<uint32_t>(params.size()));
  params.for_each([&](const std::string& name, const Tensor& t) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(t.shape().size()));
    for (int64_t dim : t.shape()) write_u32(out, static_cast<uint32_t>(dim));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "DPCK", 4) != 0) {
    throw std::runtime_error(path + " is not a DPCK checkpoint");
  }
  char version;
  in.read(&version, 1);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version in " + path);

  const uint32_t cfg_len = read_u32(in, path);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw std::runtime_error("truncated checkpoint config in " + path);

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_kv(KeyValueFile::parse(cfg_text));

  const uint32_t num_params = read_u32(in, path);
  for (uint32_t p = 0; p < num_params; ++p) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rank = read_u32(in, path);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int64_t>(read_u32(in, path));
    std::vector<double> values(static_cast<size_t>(shape_size(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated parameter payload in " + path);
    Tensor t(shape, std::move(values));
    t.set_requires_grad(true);
    ckpt.params.add(name, std::move(t));
  }

  // Cross-check the embedded config against the stored tensors.
  int64_t expected = count_params(ckpt.config.model);
  if (expected != ckpt.params.total_scalars()) {
    throw std::runtime_error("checkpoint " + path + " parameter count " +
                             std::to_string(ckpt.params.total_scalars()) +
                             " does not match its embedded config (" + std::to_string(expected) + ")");
  }
  return ckpt;
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("average_checkpoints needs at least one path");
  Checkpoint acc = load_checkpoint(paths[0]);
  for (size_t i = 1; i < paths.size(); ++i) {
    Checkpoint next = load_checkpoint(paths[i]);
    if (!next.config.model.same_architecture(acc.config.model)) {
      throw std::runtime_error("checkpoint " + paths[i] + " has a different architecture than " + paths[0]);
    }
    acc.params.for_each([&](const std::string& name, Tensor& t) {
      const Tensor& other = next.params.get(name);
      std::span<double> dst = t.raw();
      std::span<const double> src = other.values();
      for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    });
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  acc.params.for_each([&](const std::string&, Tensor& t) {
    for (double& v : t.raw()) v *= inv;
  });
  return acc;
}

}  // namespace percdia
