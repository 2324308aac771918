#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace percdia {

enum class AttentionNormAxis { kLatents, kTime, kMixed };

std::string to_string(AttentionNormAxis axis);
AttentionNormAxis attention_norm_axis_from_string(const std::string& s);

struct EncoderConfig {
  int64_t num_layers = 4;
  int64_t model_dim = 128;
  int64_t num_heads = 4;
  int64_t ff_dim = 2048;
  bool conditioning_enabled = true;
  double dropout = 0.1;

  int64_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
  int64_t num_blocks = 3;
  int64_t num_latents = 128;
  int64_t num_attractors = 10;
  int64_t num_heads = 4;
  int64_t self_ff_dim = 0;  // 0 -> 6 * model_dim (768 at the 128-dim reference)
  AttentionNormAxis attention_norm_axis = AttentionNormAxis::kLatents;
  bool initial_ca_residual_ln = true;

  int64_t resolved_self_ff_dim(int64_t model_dim) const {
    return self_ff_dim > 0 ? self_ff_dim : 6 * model_dim;
  }
  void validate() const;
  bool operator==(const DecoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  int64_t feature_dim = 345;
  uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
  // Architecture comparison for checkpoint compatibility; ignores seed.
  bool same_architecture(const ModelConfig& o) const;
};

struct TrainConfig {
  int64_t batch_size = 32;
  int64_t warmup_steps = 200000;
  int64_t crop_frames = 600;
  int64_t epochs = 1;
  int64_t steps_per_epoch = 0;  // 0: ceil(dataset size / batch_size)
  double base_lr = 1.0;         // noam scale; must be set explicitly in configs
  double ft_lr = 1e-5;
  uint64_t seed = 0;
  double clip_norm = 5.0;
  bool normalize_by_ref_speakers = true;
  bool intermediate_loss_encoder = true;
  bool intermediate_loss_blocks = true;

  void validate() const;
};

// Flat key=value text; '#' starts a comment, blank lines ignored.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  const std::vector<std::string>& keys() const { return order_; }
  std::string serialize() const;

  // Keys present in the file but never read back; used to reject typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
};

// Full run configuration: model architecture plus training hyperparameters,
// shared by train/infer/count-params so a checkpoint stays interpretable.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  static RunConfig from_kv(const KeyValueFile& kv);
  static RunConfig load(const std::string& path);
  KeyValueFile to_kv() const;
  std::string serialize() const { return to_kv().serialize(); }
};

}  // namespace percdia
