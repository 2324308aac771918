#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "percdia/segments.hpp"

namespace percdia {

// DER decomposition; der, miss, fa and confusion are fractions of the scored
// reference speech time (collar regions around reference boundaries are
// excluded from scoring).
struct DerReport {
  double der = 0.0;
  double miss = 0.0;
  double fa = 0.0;
  double confusion = 0.0;
  double total_ref_speech_s = 0.0;  // scored reference speaker time
  std::map<std::string, std::string> mapping;  // hyp speaker -> ref speaker
  bool empty_reference = false;

  double error_s() const { return (miss + fa + confusion) * total_ref_speech_s; }
};

// Continuous-time NIST-style DER via a boundary sweep: the timeline is cut at
// every reference/hypothesis boundary and collar edge; within each atom,
// miss = max(0, Nref-Nhyp), fa = max(0, Nhyp-Nref) and confusion =
// min(Nref, Nhyp) - Ncorrect, with the hypothesis-to-reference mapping chosen
// once per recording by maximum total overlap (Hungarian). A collar excludes
// +-collar_s around every reference segment boundary. An empty reference
// yields DER 0 with the empty_reference flag set.
DerReport der(const SegmentList& ref, const SegmentList& hyp, double collar_s = 0.0);

struct PrecisionRecall {
  double precision = 1.0;  // 1 by convention when there are no positives
  double recall = 1.0;
  bool no_hyp_positives = false;
  bool no_ref_positives = false;
};

struct VadOsdReport {
  PrecisionRecall vad;  // >= 1 active speaker
  PrecisionRecall osd;  // >= 2 active speakers
};

// Frame-discretized voice-activity / overlap detection precision and recall.
VadOsdReport vad_osd_pr(const SegmentList& ref, const SegmentList& hyp, double frame_s = 0.01);

// Confusion counts between reference and predicted speaker numbers.
struct CountConfusion {
  std::vector<std::vector<int64_t>> counts;  // [ref][predicted], square

  void record(int64_t ref_count, int64_t predicted_count);
  int64_t max_count() const { return static_cast<int64_t>(counts.size()) - 1; }
  std::vector<int64_t> row_sums() const;
  double diagonal_fraction() const;
  std::string to_csv() const;
};

// Aggregate DER over several recordings: total error seconds over total
// scored reference seconds.
struct ScoreSummary {
  std::map<std::string, DerReport> per_recording;
  DerReport overall;
};
ScoreSummary score_recordings(const std::map<std::string, SegmentList>& ref,
                              const std::map<std::string, SegmentList>& hyp, double collar_s);

}  // namespace percdia
