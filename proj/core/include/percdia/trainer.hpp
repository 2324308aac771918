#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "percdia/config.hpp"
#include "percdia/losses.hpp"
#include "percdia/model.hpp"
#include "percdia/simdata.hpp"

namespace percdia {

// scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double noam_lr(int64_t step, int64_t d_model, int64_t warmup, double scale);

// Per-parameter Adam moments, aligned with the parameter store order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  int64_t step = 0;

  static AdamState init(const ParamStore& params);
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Standard Adam with bias correction; reads accumulated .grad, updates values
// in place. Parameters without populated gradients are treated as zero-grad.
void adam_step(ParamStore& params, AdamState& state, double lr, const AdamOptions& opts = {});

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

enum class TrainMode { kSchedule, kFineTune };

struct TrainResult {
  std::vector<std::string> checkpoint_paths;
  std::string metrics_path;
  std::vector<double> loss_curve;  // one total per step
  int64_t steps = 0;
};

// Optimization loop: random fixed-length crops, total_loss, backward, clipped
// Adam with the noam schedule (or fixed ft_lr in fine-tune mode), one
// checkpoint per epoch and an append-only metrics CSV
// (step,lr,total,diar,exist,entropy) in out_dir.
TrainResult train(ParamStore& params, const RunConfig& config, const std::vector<SimRecording>& data,
                  const std::string& out_dir, TrainMode mode = TrainMode::kSchedule,
                  int64_t start_epoch = 0);

// Mean of the k most recent epoch checkpoints in out_dir.
Checkpoint average_recent_checkpoints(const std::vector<std::string>& checkpoint_paths, int64_t k = 10);

}  // namespace percdia
