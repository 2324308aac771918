#include "percdia/losses.hpp"

#include <stdexcept>

#include "percdia/assignment.hpp"
#include "percdia/perceiver.hpp"

namespace percdia {
namespace {

constexpr double kProbClamp = 1e-7;

Tensor pad_reference(const Tensor& ref, int64_t num_attractors) {
  const int64_t t = ref.rows(), s = ref.cols();
  Tensor padded(Shape{t, num_attractors});
  double* dst = padded.raw().data();
  const double* src = ref.values().data();
  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < s; ++j) dst[i * num_attractors + j] = src[i * s + j];
  }
  return padded;
}

}  // namespace

PitResult pit_bce(const Tensor& ref_activity, const Tensor& posteriors, bool normalize_by_ref_speakers) {
  const int64_t t = posteriors.rows();
  const int64_t num_attractors = posteriors.cols();
  const int64_t s_ref = ref_activity.defined() ? ref_activity.cols() : 0;
  if (s_ref > 0 && ref_activity.rows() != t) {
    throw std::invalid_argument("reference and posterior frame counts differ");
  }
  if (s_ref > num_attractors) {
    throw std::invalid_argument("reference has " + std::to_string(s_ref) + " speakers but only " +
                                std::to_string(num_attractors) + " attractors are available");
  }

  Tensor y = (s_ref == num_attractors && s_ref > 0) ? ref_activity
                                                    : pad_reference(s_ref > 0 ? ref_activity : Tensor(Shape{t, 0}),
                                                                    num_attractors);
  // Cost decomposes per (reference, attractor) pair:
  // C = -(Y^T log P + (1-Y)^T log(1-P)), so linear assignment is exact.
  Tensor p = clamp(posteriors, kProbClamp, 1.0 - kProbClamp);
  Tensor one = Tensor::scalar(1.0);
  Tensor cost = scale(matmul(transpose(y), log(p)) + matmul(transpose(sub(one, y)), log(sub(one, p))), -1.0);

  std::vector<double> cost_values(cost.values().begin(), cost.values().end());
  std::vector<int> col_of_row = solve_assignment_min(cost_values, static_cast<int>(num_attractors));

  // Build the selection mask; rows are (padded) reference columns.
  Tensor mask(Shape{num_attractors, num_attractors});
  std::vector<int> assignment(static_cast<size_t>(num_attractors), -1);
  for (int64_t i = 0; i < num_attractors; ++i) {
    const int j = col_of_row[static_cast<size_t>(i)];
    mask.raw()[static_cast<size_t>(i * num_attractors + j)] = 1.0;
    if (i < s_ref) assignment[static_cast<size_t>(j)] = static_cast<int>(i);
  }

  double norm;
  if (normalize_by_ref_speakers) {
    norm = s_ref > 0 ? static_cast<double>(t * s_ref) : static_cast<double>(t);
  } else {
    norm = static_cast<double>(t * num_attractors);
  }

  PitResult result;
  result.loss = scale(sum(mul(cost, mask)), 1.0 / norm);
  result.assignment = std::move(assignment);
  result.value = result.loss.item();
  return result;
}

std::vector<double> existence_targets_from_assignment(const std::vector<int>& assignment) {
  std::vector<double> r(assignment.size(), 0.0);
  for (size_t j = 0; j < assignment.size(); ++j) r[j] = assignment[j] >= 0 ? 1.0 : 0.0;
  return r;
}

Tensor existence_bce(const std::vector<double>& matched_real, const Tensor& existence) {
  const int64_t a = existence.size();
  if (static_cast<int64_t>(matched_real.size()) != a) {
    throw std::invalid_argument("existence target length does not match attractor count");
  }
  Tensor r(Shape{a, 1}, std::vector<double>(matched_real));
  Tensor p = clamp(existence, kProbClamp, 1.0 - kProbClamp);
  Tensor one = Tensor::scalar(1.0);
  Tensor bce = scale(mul(r, log(p)) + mul(sub(one, r), log(sub(one, p))), -1.0);
  return mean(bce);
}

LossBreakdown total_loss(const ReferenceLabels& ref, const ForwardOutput& fwd,
                         const Tensor& combine_weights, const LossFlags& flags) {
  Tensor y = ref.activity_tensor();

  LossBreakdown out;
  PitResult final_pit = pit_bce(y, fwd.posteriors, flags.normalize_by_ref_speakers);
  out.chosen_permutation = final_pit.assignment;
  out.diar_final = final_pit.value;

  Tensor exist_final =
      existence_bce(existence_targets_from_assignment(final_pit.assignment), fwd.existence);
  out.exist_final = exist_final.item();

  Tensor total = final_pit.loss + exist_final;

  // Intermediate terms, each with its own optimal assignment (and the matching
  // existence targets), averaged over L-1 encoder layers / B-1 blocks.
  if (flags.intermediate_loss_encoder && !fwd.per_layer_posteriors.empty()) {
    const double w = 1.0 / static_cast<double>(fwd.per_layer_posteriors.size());
    for (const Tensor& post : fwd.per_layer_posteriors) {
      PitResult pit = pit_bce(y, post, flags.normalize_by_ref_speakers);
      Tensor exist =
          existence_bce(existence_targets_from_assignment(pit.assignment), fwd.existence);
      out.diar_intermediate += w * pit.value;
      out.exist_intermediate += w * exist.item();
      total = total + scale(pit.loss + exist, w);
    }
  }
  if (flags.intermediate_loss_blocks && !fwd.per_block_posteriors.empty()) {
    const double w = 1.0 / static_cast<double>(fwd.per_block_posteriors.size());
    for (size_t b = 0; b < fwd.per_block_posteriors.size(); ++b) {
      PitResult pit = pit_bce(y, fwd.per_block_posteriors[b], flags.normalize_by_ref_speakers);
      Tensor exist = existence_bce(existence_targets_from_assignment(pit.assignment),
                                   fwd.per_block_existence[b]);
      out.diar_intermediate += w * pit.value;
      out.exist_intermediate += w * exist.item();
      total = total + scale(pit.loss + exist, w);
    }
  }

  Tensor entropy = entropy_loss(combine_weights);
  out.entropy = entropy.item();
  total = total + entropy;

  out.total = total;
  out.total_value = total.item();
  return out;
}

}  // namespace percdia
