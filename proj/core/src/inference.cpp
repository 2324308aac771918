#include "percdia/inference.hpp"

#include <stdexcept>

#include "percdia/features.hpp"

namespace percdia {

BinaryActivity posteriors_to_activity(const ForwardOutput& fwd, double activity_threshold,
                                      double existence_threshold) {
  const int64_t t = fwd.posteriors.rows();
  const int64_t a = fwd.posteriors.cols();
  std::vector<int64_t> kept;
  for (int64_t j = 0; j < a; ++j) {
    if (fwd.existence[j] >= existence_threshold) kept.push_back(j);
  }
  BinaryActivity act;
  act.num_frames = t;
  for (int64_t j : kept) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "spk%02lld", static_cast<long long>(j));
    act.speaker_ids.push_back(buf);
  }
  act.values.assign(static_cast<size_t>(t) * kept.size(), 0);
  for (int64_t i = 0; i < t; ++i) {
    for (size_t jj = 0; jj < kept.size(); ++jj) {
      act.set(i, static_cast<int64_t>(jj), fwd.posteriors(i, kept[jj]) >= activity_threshold ? 1 : 0);
    }
  }
  return act;
}

int64_t predicted_speaker_count(const ForwardOutput& fwd, double existence_threshold) {
  int64_t n = 0;
  for (int64_t j = 0; j < fwd.existence.size(); ++j) {
    if (fwd.existence[j] >= existence_threshold) ++n;
  }
  return n;
}

std::vector<uint8_t> median_filter(const std::vector<uint8_t>& column, int64_t window) {
  if (window % 2 == 0) throw std::invalid_argument("median filter window must be odd");
  const int64_t t = static_cast<int64_t>(column.size());
  if (window <= 1 || t == 0) return column;
  const int64_t k = window / 2;

  std::vector<uint8_t> out(column);
  // Left of the window reads smoothed values; positions before the start and
  // past the end replicate the raw boundary samples.
  auto left = [&](int64_t i) { return i < 0 ? column[0] : out[static_cast<size_t>(i)]; };
  auto right = [&](int64_t i) { return column[static_cast<size_t>(std::min(i, t - 1))]; };
  for (int64_t i = 0; i < t; ++i) {
    int64_t ones = 0;
    for (int64_t j = i - k; j < i; ++j) ones += left(j);          // already smoothed
    for (int64_t j = i; j <= i + k; ++j) ones += right(j);        // raw input
    out[static_cast<size_t>(i)] = (2 * ones > window) ? 1 : 0;
  }
  return out;
}

void median_filter_inplace(BinaryActivity& activity, int64_t window) {
  const int64_t t = activity.num_frames;
  std::vector<uint8_t> column(static_cast<size_t>(t));
  for (int64_t s = 0; s < activity.num_speakers(); ++s) {
    for (int64_t i = 0; i < t; ++i) column[static_cast<size_t>(i)] = activity.at(i, s);
    std::vector<uint8_t> filtered = median_filter(column, window);
    for (int64_t i = 0; i < t; ++i) activity.set(i, s, filtered[static_cast<size_t>(i)]);
  }
}

SegmentList infer_file(const ParamStore& params, const ModelConfig& cfg, const FeatureSequence& features,
                       const InferenceOptions& options) {
  FeatureSequence input = features;
  if (features.dim() == kStackBaseDim && cfg.feature_dim != kStackBaseDim) {
    input = stack_features(features.features, options.subsample, features.recording_id);
  }
  if (input.num_frames() == 0) {
    SegmentList empty;
    empty.recording_id = features.recording_id;
    return empty;
  }
  ForwardOutput fwd = forward(input, params, cfg, PassMode::eval());
  BinaryActivity act =
      posteriors_to_activity(fwd, options.activity_threshold, options.existence_threshold);
  if (options.median_window > 1) median_filter_inplace(act, options.median_window);
  return activity_to_segments(act, input.frame_period_s, features.recording_id);
}

}  // namespace percdia
