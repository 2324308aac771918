#include "percdia/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace percdia {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::vector<std::string> kKnownKeys = {
    // model
    "feature_dim", "model_dim", "num_layers", "num_heads", "ff_dim", "conditioning_enabled",
    "dropout", "num_blocks", "num_latents", "num_attractors", "decoder_heads", "self_ff_dim",
    "attention_norm_axis", "initial_ca_residual_ln",
    // train
    "batch_size", "warmup_steps", "crop_frames", "epochs", "steps_per_epoch", "base_lr", "ft_lr",
    "seed", "clip_norm", "normalize_by_ref_speakers", "intermediate_loss_encoder",
    "intermediate_loss_blocks"};

}  // namespace

std::string to_string(AttentionNormAxis axis) {
  switch (axis) {
    case AttentionNormAxis::kLatents: return "latents";
    case AttentionNormAxis::kTime: return "time";
    case AttentionNormAxis::kMixed: return "mixed";
  }
  return "latents";
}

AttentionNormAxis attention_norm_axis_from_string(const std::string& s) {
  if (s == "latents") return AttentionNormAxis::kLatents;
  if (s == "time") return AttentionNormAxis::kTime;
  if (s == "mixed") return AttentionNormAxis::kMixed;
  throw std::invalid_argument("attention_norm_axis must be latents|time|mixed, got '" + s + "'");
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (model_dim < 1 || num_heads < 1) throw std::invalid_argument("model_dim and num_heads must be >= 1");
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("model_dim " + std::to_string(model_dim) +
                                " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (ff_dim < 1) throw std::invalid_argument("ff_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
}

void DecoderConfig::validate() const {
  if (num_blocks < 1) throw std::invalid_argument("num_blocks must be >= 1");
  if (num_attractors < 1) throw std::invalid_argument("num_attractors must be >= 1");
  if (num_latents < 1) throw std::invalid_argument("num_latents must be >= 1");
  if (num_heads < 1) throw std::invalid_argument("decoder_heads must be >= 1");
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (encoder.model_dim % decoder.num_heads != 0) {
    throw std::invalid_argument("model_dim not divisible by decoder_heads");
  }
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  ModelConfig a = *this, b = o;
  a.seed = 0;
  b.seed = 0;
  a.encoder.dropout = 0.0;
  b.encoder.dropout = 0.0;
  return a == b;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (crop_frames < 1) throw std::invalid_argument("crop_frames must be >= 1");
  if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " has no '=': " + t);
    }
    kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool KeyValueFile::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("missing config key '" + key + "'");
  return it->second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KeyValueFile::get_int(const std::string& key, int64_t fallback) const {
  if (!has(key)) return fallback;
  return std::stoll(get(key));
}

uint64_t KeyValueFile::get_uint(const std::string& key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  return std::stoull(get(key));
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return std::stod(get(key));
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "' has non-boolean value '" + v + "'");
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = value;
}

std::string KeyValueFile::serialize() const {
  std::ostringstream os;
  for (const std::string& k : order_) os << k << "=" << values_.at(k) << "\n";
  return os.str();
}

std::vector<std::string> KeyValueFile::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const std::string& k : order_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

RunConfig RunConfig::from_kv(const KeyValueFile& kv) {
  auto unknown = kv.unknown_keys(kKnownKeys);
  if (!unknown.empty()) {
    throw std::invalid_argument("unknown config key '" + unknown.front() + "'");
  }
  RunConfig rc;
  ModelConfig& m = rc.model;
  m.feature_dim = kv.get_int("feature_dim", m.feature_dim);
  m.encoder.model_dim = kv.get_int("model_dim", m.encoder.model_dim);
  m.encoder.num_layers = kv.get_int("num_layers", m.encoder.num_layers);
  m.encoder.num_heads = kv.get_int("num_heads", m.encoder.num_heads);
  m.encoder.ff_dim = kv.get_int("ff_dim", m.encoder.ff_dim);
  m.encoder.conditioning_enabled = kv.get_bool("conditioning_enabled", m.encoder.conditioning_enabled);
  m.encoder.dropout = kv.get_double("dropout", m.encoder.dropout);
  m.decoder.num_blocks = kv.get_int("num_blocks", m.decoder.num_blocks);
  m.decoder.num_latents = kv.get_int("num_latents", m.decoder.num_latents);
  m.decoder.num_attractors = kv.get_int("num_attractors", m.decoder.num_attractors);
  m.decoder.num_heads = kv.get_int("decoder_heads", m.decoder.num_heads);
  m.decoder.self_ff_dim = kv.get_int("self_ff_dim", m.decoder.self_ff_dim);
  m.decoder.attention_norm_axis =
      attention_norm_axis_from_string(kv.get_or("attention_norm_axis", to_string(m.decoder.attention_norm_axis)));
  m.decoder.initial_ca_residual_ln = kv.get_bool("initial_ca_residual_ln", m.decoder.initial_ca_residual_ln);
  m.seed = kv.get_uint("seed", m.seed);

  TrainConfig& t = rc.train;
  t.batch_size = kv.get_int("batch_size", t.batch_size);
  t.warmup_steps = kv.get_int("warmup_steps", t.warmup_steps);
  t.crop_frames = kv.get_int("crop_frames", t.crop_frames);
  t.epochs = kv.get_int("epochs", t.epochs);
  t.steps_per_epoch = kv.get_int("steps_per_epoch", t.steps_per_epoch);
  t.base_lr = kv.get_double("base_lr", t.base_lr);
  t.ft_lr = kv.get_double("ft_lr", t.ft_lr);
  t.seed = kv.get_uint("seed", t.seed);
  t.clip_norm = kv.get_double("clip_norm", t.clip_norm);
  t.normalize_by_ref_speakers = kv.get_bool("normalize_by_ref_speakers", t.normalize_by_ref_speakers);
  t.intermediate_loss_encoder = kv.get_bool("intermediate_loss_encoder", t.intermediate_loss_encoder);
  t.intermediate_loss_blocks = kv.get_bool("intermediate_loss_blocks", t.intermediate_loss_blocks);

  m.validate();
  t.validate();
  return rc;
}

RunConfig RunConfig::load(const std::string& path) { return from_kv(KeyValueFile::load(path)); }

KeyValueFile RunConfig::to_kv() const {
  KeyValueFile kv;
  auto b = [](bool v) { return v ? std::string("true") : std::string("false"); };
  kv.set("feature_dim", std::to_string(model.feature_dim));
  kv.set("model_dim", std::to_string(model.encoder.model_dim));
  kv.set("num_layers", std::to_string(model.encoder.num_layers));
  kv.set("num_heads", std::to_string(model.encoder.num_heads));
  kv.set("ff_dim", std::to_string(model.encoder.ff_dim));
  kv.set("conditioning_enabled", b(model.encoder.conditioning_enabled));
  {
    std::ostringstream os;
    os.precision(17);
    os << model.encoder.dropout;
    kv.set("dropout", os.str());
  }
  kv.set("num_blocks", std::to_string(model.decoder.num_blocks));
  kv.set("num_latents", std::to_string(model.decoder.num_latents));
  kv.set("num_attractors", std::to_string(model.decoder.num_attractors));
  kv.set("decoder_heads", std::to_string(model.decoder.num_heads));
  kv.set("self_ff_dim", std::to_string(model.decoder.self_ff_dim));
  kv.set("attention_norm_axis", to_string(model.decoder.attention_norm_axis));
  kv.set("initial_ca_residual_ln", b(model.decoder.initial_ca_residual_ln));
  kv.set("seed", std::to_string(model.seed));
  kv.set("batch_size", std::to_string(train.batch_size));
  kv.set("warmup_steps", std::to_string(train.warmup_steps));
  kv.set("crop_frames", std::to_string(train.crop_frames));
  kv.set("epochs", std::to_string(train.epochs));
  kv.set("steps_per_epoch", std::to_string(train.steps_per_epoch));
  {
    std::ostringstream os;
    os.precision(17);
    os << train.base_lr;
    kv.set("base_lr", os.str());
    std::ostringstream os2;
    os2.precision(17);
    os2 << train.ft_lr;
    kv.set("ft_lr", os2.str());
    std::ostringstream os3;
    os3.precision(17);
    os3 << train.clip_norm;
    kv.set("clip_norm", os3.str());
  }
  kv.set("normalize_by_ref_speakers", b(train.normalize_by_ref_speakers));
  kv.set("intermediate_loss_encoder", b(train.intermediate_loss_encoder));
  kv.set("intermediate_loss_blocks", b(train.intermediate_loss_blocks));
  return kv;
}

}  // namespace percdia
