#pragma once

#include <cstdint>
#include <vector>

#include "percdia/model.hpp"
#include "percdia/segments.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

// Result of one permutation-invariant BCE term. assignment[j] is the reference
// column matched to attractor j, or -1 when j was matched to zero padding.
struct PitResult {
  Tensor loss;  // scalar, differentiable
  std::vector<int> assignment;
  double value = 0.0;
};

// Pads the reference to num-attractor columns with zeros, builds the per-pair
// BCE cost matrix (probabilities clamped to [1e-7, 1-1e-7]), and solves the
// exact minimum-cost one-to-one assignment. Normalizes by T*S_ref when
// normalize_by_ref_speakers is set (falling back to T when S_ref = 0), by T*A
// otherwise. Requires S_ref <= A.
PitResult pit_bce(const Tensor& ref_activity, const Tensor& posteriors,
                  bool normalize_by_ref_speakers = true);

// Mean over attractors of BCE(r_j, p_j); r_j = 1 iff attractor j was matched
// to a real reference speaker by the diarization term's assignment.
Tensor existence_bce(const std::vector<double>& matched_real, const Tensor& existence);

std::vector<double> existence_targets_from_assignment(const std::vector<int>& assignment);

struct LossFlags {
  bool normalize_by_ref_speakers = true;
  bool intermediate_loss_encoder = true;
  bool intermediate_loss_blocks = true;
};

struct LossBreakdown {
  Tensor total;  // scalar, differentiable
  double total_value = 0.0;
  double diar_final = 0.0;
  double diar_intermediate = 0.0;
  double exist_final = 0.0;
  double exist_intermediate = 0.0;
  double entropy = 0.0;
  std::vector<int> chosen_permutation;  // attractor -> reference (or -1), final term
};

// L = Ld + La + Le. Ld is the final PIT term plus the mean over per-layer and
// per-block intermediate PIT terms (each with its own optimal assignment); La
// mirrors it with existence BCE; Le is the entropy regularizer on the
// latent-combination weights.
LossBreakdown total_loss(const ReferenceLabels& ref, const ForwardOutput& fwd,
                         const Tensor& combine_weights, const LossFlags& flags = {});

}  // namespace percdia
