#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "percdia/tensor.hpp"

namespace percdia {

struct Segment {
  std::string speaker_id;
  double onset_s = 0.0;
  double duration_s = 0.0;

  double offset_s() const { return onset_s + duration_s; }
};

// Labeled time segments for one recording. Per-speaker segments are kept
// sorted and non-overlapping (merge on construction via add()).
struct SegmentList {
  std::string recording_id;
  std::vector<Segment> segments;

  void add(const std::string& speaker, double onset_s, double duration_s);
  std::vector<std::string> speakers() const;
  std::vector<Segment> for_speaker(const std::string& speaker) const;
  double total_speech_s() const;  // sum over speakers (overlap counted per speaker)
  bool empty() const { return segments.empty(); }
  void sort_and_merge();
};

// T x S binary activity with named speakers (hypothesis or reference side).
struct BinaryActivity {
  int64_t num_frames = 0;
  std::vector<std::string> speaker_ids;
  std::vector<uint8_t> values;  // row-major T x S

  uint8_t at(int64_t t, int64_t s) const { return values[static_cast<size_t>(t * num_speakers() + s)]; }
  void set(int64_t t, int64_t s, uint8_t v) { values[static_cast<size_t>(t * num_speakers() + s)] = v; }
  int64_t num_speakers() const { return static_cast<int64_t>(speaker_ids.size()); }
};

// Reference labels: binary T x S activity plus speaker names.
struct ReferenceLabels {
  BinaryActivity activity;
  double frame_period_s = 0.1;

  int64_t num_frames() const { return activity.num_frames; }
  int64_t num_speakers() const { return activity.num_speakers(); }
  Tensor activity_tensor() const;  // T x S doubles in {0,1}
};

// Maximal runs of 1s become segments on the frame grid.
SegmentList activity_to_segments(const BinaryActivity& activity, double frame_period_s,
                                 const std::string& recording_id);

// Rasterizes segments back onto the frame grid (frame k covers
// [k*fp, (k+1)*fp); a frame is active when its onset lies inside a segment,
// matching activity_to_segments so the round trip is the identity).
BinaryActivity segments_to_activity(const SegmentList& segments, double frame_period_s,
                                    int64_t num_frames = -1);

// RTTM lines:
// SPEAKER <rec-id> 1 <onset:%.3f> <dur:%.3f> <NA> <NA> <spk-id> <NA> <NA>
void write_rttm(const std::string& path, const std::vector<SegmentList>& recordings);
void append_rttm(std::ostream& out, const SegmentList& segments);

// Groups parsed segments by recording id. Non-SPEAKER lines are ignored;
// malformed numeric fields raise with the offending line number.
std::map<std::string, SegmentList> parse_rttm(const std::string& path);
std::map<std::string, SegmentList> parse_rttm_text(const std::string& text, const std::string& origin);

}  // namespace percdia
