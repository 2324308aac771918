#include "percdia/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace percdia {

double noam_lr(int64_t step, int64_t d_model, int64_t warmup, double scale) {
  if (step < 1) throw std::invalid_argument("noam_lr step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

AdamState AdamState::init(const ParamStore& params) {
  AdamState state;
  params.for_each([&](const std::string&, const Tensor& t) {
    state.m.emplace_back(static_cast<size_t>(t.size()), 0.0);
    state.v.emplace_back(static_cast<size_t>(t.size()), 0.0);
  });
  return state;
}

void adam_step(ParamStore& params, AdamState& state, double lr, const AdamOptions& opts) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  size_t idx = 0;
  params.for_each([&](const std::string&, Tensor& t) {
    std::vector<double>& m = state.m[idx];
    std::vector<double>& v = state.v[idx];
    ++idx;
    if (!t.has_grad()) return;  // zero gradient: moments decay, values hold
    std::span<const double> g = t.grad();
    std::span<double> values = t.raw();
    for (size_t i = 0; i < values.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + opts.epsilon);
    }
  });
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  params.for_each([&](const std::string&, Tensor& t) {
    if (!t.has_grad()) return;
    for (double g : t.grad()) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    params.for_each([&](const std::string&, Tensor& t) {
      if (!t.has_grad()) return;
      for (double& g : t.grad_raw()) g *= factor;
    });
  }
  return norm;
}

namespace {

// Fixed-length crop; recordings shorter than crop_frames are padded with
// silence labels and zero features.
void crop_recording(const SimRecording& rec, int64_t start, int64_t crop_frames,
                    FeatureSequence* features, ReferenceLabels* labels) {
  const int64_t t = rec.features.num_frames();
  const int64_t f = rec.features.dim();
  const int64_t s = rec.labels.num_speakers();

  Tensor feat(Shape{crop_frames, f});
  BinaryActivity act;
  act.num_frames = crop_frames;
  act.speaker_ids = rec.labels.activity.speaker_ids;
  act.values.assign(static_cast<size_t>(crop_frames * s), 0);

  const double* src = rec.features.features.values().data();
  double* dst = feat.raw().data();
  for (int64_t i = 0; i < crop_frames; ++i) {
    const int64_t row = start + i;
    if (row >= t) break;
    std::copy(src + row * f, src + (row + 1) * f, dst + i * f);
    for (int64_t j = 0; j < s; ++j) act.set(i, j, rec.labels.activity.at(row, j));
  }

  features->features = std::move(feat);
  features->frame_period_s = rec.features.frame_period_s;
  features->recording_id = rec.recording_id;
  labels->activity = std::move(act);
  labels->frame_period_s = rec.labels.frame_period_s;
}

// Drop reference speakers that never appear inside the crop, so the PIT
// padding reflects the speakers actually present.
ReferenceLabels drop_silent_speakers(const ReferenceLabels& labels) {
  const int64_t t = labels.num_frames(), s = labels.num_speakers();
  std::vector<int64_t> keep;
  for (int64_t j = 0; j < s; ++j) {
    bool active = false;
    for (int64_t i = 0; i < t && !active; ++i) active = labels.activity.at(i, j) != 0;
    if (active) keep.push_back(j);
  }
  if (static_cast<int64_t>(keep.size()) == s) return labels;
  ReferenceLabels out;
  out.frame_period_s = labels.frame_period_s;
  out.activity.num_frames = t;
  for (int64_t j : keep) out.activity.speaker_ids.push_back(labels.activity.speaker_ids[static_cast<size_t>(j)]);
  out.activity.values.assign(static_cast<size_t>(t) * keep.size(), 0);
  for (int64_t i = 0; i < t; ++i) {
    for (size_t jj = 0; jj < keep.size(); ++jj) {
      out.activity.set(i, static_cast<int64_t>(jj), labels.activity.at(i, keep[jj]));
    }
  }
  return out;
}

}  // namespace

TrainResult train(ParamStore& params, const RunConfig& config, const std::vector<SimRecording>& data,
                  const std::string& out_dir, TrainMode mode, int64_t start_epoch) {
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  const TrainConfig& tc = config.train;
  tc.validate();
  std::filesystem::create_directories(out_dir);

  std::mt19937_64 rng(tc.seed);
  std::mt19937_64 dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);

  const int64_t steps_per_epoch =
      tc.steps_per_epoch > 0
          ? tc.steps_per_epoch
          : (static_cast<int64_t>(data.size()) + tc.batch_size - 1) / tc.batch_size;

  LossFlags flags{tc.normalize_by_ref_speakers, tc.intermediate_loss_encoder,
                  tc.intermediate_loss_blocks};

  const std::string metrics_path = out_dir + "/metrics.csv";
  const bool fresh = !std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_path);
  if (fresh) metrics << "step,lr,total,diar,exist,entropy\n";

  AdamState adam = AdamState::init(params);
  TrainResult result;
  result.metrics_path = metrics_path;

  int64_t global_step = start_epoch * steps_per_epoch;
  for (int64_t epoch = start_epoch; epoch < start_epoch + tc.epochs; ++epoch) {
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      ++global_step;
      Tape tape;
      double diar = 0.0, exist = 0.0, entropy = 0.0;
      Tensor batch_total;
      {
        Tape::Scope scope(tape);
        PassMode pass = config.model.encoder.dropout > 0.0
                            ? PassMode::train(config.model.encoder.dropout, dropout_rng)
                            : PassMode::eval();
        for (int64_t b = 0; b < tc.batch_size; ++b) {
          const SimRecording& rec = data[pick(rng)];
          const int64_t max_start = std::max<int64_t>(rec.features.num_frames() - tc.crop_frames, 0);
          const int64_t start =
              max_start > 0
                  ? static_cast<int64_t>(std::uniform_int_distribution<int64_t>(0, max_start)(rng))
                  : 0;
          FeatureSequence crop_feat;
          ReferenceLabels crop_labels;
          crop_recording(rec, start, tc.crop_frames, &crop_feat, &crop_labels);
          ReferenceLabels effective = drop_silent_speakers(crop_labels);

          ForwardOutput fwd = forward(crop_feat, params, config.model, pass);
          LossBreakdown loss = total_loss(effective, fwd, params.get("decoder.combine"), flags);
          diar += loss.diar_final + loss.diar_intermediate;
          exist += loss.exist_final + loss.exist_intermediate;
          entropy += loss.entropy;
          batch_total = batch_total.defined() ? batch_total + loss.total : loss.total;
        }
        batch_total = scale(batch_total, 1.0 / static_cast<double>(tc.batch_size));
      }
      params.zero_grads();
      tape.backward(batch_total);
      clip_grad_norm(params, tc.clip_norm);

      const double lr = mode == TrainMode::kFineTune
                            ? tc.ft_lr
                            : noam_lr(global_step, config.model.encoder.model_dim, tc.warmup_steps,
                                      tc.base_lr);
      adam_step(params, adam, lr);

      const double inv_b = 1.0 / static_cast<double>(tc.batch_size);
      const double total_value = batch_total.item();
      result.loss_curve.push_back(total_value);
      metrics << global_step << "," << lr << "," << total_value << "," << diar * inv_b << ","
              << exist * inv_b << "," << entropy * inv_b << "\n";
      ++result.steps;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%04lld.dpck",
                  static_cast<long long>(epoch + 1));
    const std::string path = out_dir + "/" + name;
    save_checkpoint(path, config, params);
    result.checkpoint_paths.push_back(path);
  }
  return result;
}

Checkpoint average_recent_checkpoints(const std::vector<std::string>& checkpoint_paths, int64_t k) {
  if (checkpoint_paths.empty()) throw std::invalid_argument("no checkpoints to average");
  const size_t take = std::min<size_t>(static_cast<size_t>(k), checkpoint_paths.size());
  std::vector<std::string> recent(checkpoint_paths.end() - static_cast<int64_t>(take),
                                  checkpoint_paths.end());
  return average_checkpoints(recent);
}

}  // namespace percdia
