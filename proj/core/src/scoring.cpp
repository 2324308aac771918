#include "percdia/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "percdia/assignment.hpp"

namespace percdia {
namespace {

struct SpeakerIntervals {
  std::string id;
  std::vector<std::pair<double, double>> intervals;  // sorted, merged

  bool active_at(double t) const {
    auto it = std::upper_bound(intervals.begin(), intervals.end(), t,
                               [](double v, const std::pair<double, double>& iv) { return v < iv.first; });
    if (it == intervals.begin()) return false;
    --it;
    return t < it->second;
  }
};

std::vector<SpeakerIntervals> collect(const SegmentList& list) {
  std::vector<SpeakerIntervals> out;
  for (const std::string& spk : list.speakers()) {
    SpeakerIntervals si;
    si.id = spk;
    for (const Segment& s : list.for_speaker(spk)) si.intervals.emplace_back(s.onset_s, s.offset_s());
    std::sort(si.intervals.begin(), si.intervals.end());
    std::vector<std::pair<double, double>> merged;
    for (auto& iv : si.intervals) {
      if (!merged.empty() && iv.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, iv.second);
      } else {
        merged.push_back(iv);
      }
    }
    si.intervals = std::move(merged);
    out.push_back(std::move(si));
  }
  return out;
}

// Merged collar exclusion zones around every reference segment boundary.
std::vector<std::pair<double, double>> exclusion_zones(const SegmentList& ref, double collar_s) {
  std::vector<std::pair<double, double>> zones;
  if (collar_s <= 0.0) return zones;
  for (const Segment& s : ref.segments) {
    zones.emplace_back(s.onset_s - collar_s, s.onset_s + collar_s);
    zones.emplace_back(s.offset_s() - collar_s, s.offset_s() + collar_s);
  }
  std::sort(zones.begin(), zones.end());
  std::vector<std::pair<double, double>> merged;
  for (auto& z : zones) {
    if (!merged.empty() && z.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, z.second);
    } else {
      merged.push_back(z);
    }
  }
  return merged;
}

bool excluded_at(const std::vector<std::pair<double, double>>& zones, double t) {
  auto it = std::upper_bound(zones.begin(), zones.end(), t,
                             [](double v, const std::pair<double, double>& z) { return v < z.first; });
  if (it == zones.begin()) return false;
  --it;
  return t < it->second;
}

}  // namespace

DerReport der(const SegmentList& ref, const SegmentList& hyp, double collar_s) {
  std::vector<SpeakerIntervals> refs = collect(ref);
  std::vector<SpeakerIntervals> hyps = collect(hyp);
  const auto zones = exclusion_zones(ref, collar_s);

  // Atom boundaries: every ref/hyp segment edge and collar edge.
  std::vector<double> cuts;
  for (const auto& si : refs)
    for (const auto& iv : si.intervals) {
      cuts.push_back(iv.first);
      cuts.push_back(iv.second);
    }
  for (const auto& si : hyps)
    for (const auto& iv : si.intervals) {
      cuts.push_back(iv.first);
      cuts.push_back(iv.second);
    }
  for (const auto& z : zones) {
    cuts.push_back(z.first);
    cuts.push_back(z.second);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  DerReport report;
  if (refs.empty()) {
    report.empty_reference = true;
    return report;  // DER 0 by convention
  }
  const size_t nr = refs.size(), nh = hyps.size();

  // Pass 1: per-pair overlap inside scored regions, for the global mapping.
  std::vector<double> overlap(nr * nh, 0.0);
  std::vector<char> ref_active(nr), hyp_active(nh);
  auto sweep = [&](auto&& per_atom) {
    for (size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c], b = cuts[c + 1];
      const double mid = 0.5 * (a + b);
      if (excluded_at(zones, mid)) continue;
      for (size_t i = 0; i < nr; ++i) ref_active[i] = refs[i].active_at(mid);
      for (size_t j = 0; j < nh; ++j) hyp_active[j] = hyps[j].active_at(mid);
      per_atom(b - a);
    }
  };

  sweep([&](double dur) {
    for (size_t i = 0; i < nr; ++i) {
      if (!ref_active[i]) continue;
      for (size_t j = 0; j < nh; ++j) {
        if (hyp_active[j]) overlap[i * nh + j] += dur;
      }
    }
  });

  // Hungarian on the padded square matrix, maximizing total overlap.
  const int n = static_cast<int>(std::max(nr, nh));
  std::vector<int> ref_of_hyp(nh, -1);
  if (n > 0 && nh > 0) {
    std::vector<double> weight(static_cast<size_t>(n) * n, 0.0);
    for (size_t i = 0; i < nr; ++i)
      for (size_t j = 0; j < nh; ++j) weight[i * n + j] = overlap[i * nh + j];
    std::vector<int> col_of_row = solve_assignment_max(weight, n);
    for (size_t i = 0; i < nr; ++i) {
      const int j = col_of_row[i];
      if (j < static_cast<int>(nh) && overlap[i * nh + j] > 0.0) {
        ref_of_hyp[static_cast<size_t>(j)] = static_cast<int>(i);
        report.mapping[hyps[static_cast<size_t>(j)].id] = refs[i].id;
      }
    }
  }

  // Pass 2: NIST accounting per atom.
  double miss_s = 0.0, fa_s = 0.0, conf_s = 0.0, ref_s = 0.0;
  sweep([&](double dur) {
    int n_ref = 0, n_hyp = 0, n_correct = 0;
    for (size_t i = 0; i < nr; ++i) n_ref += ref_active[i];
    for (size_t j = 0; j < nh; ++j) {
      n_hyp += hyp_active[j];
      if (hyp_active[j] && ref_of_hyp[j] >= 0 && ref_active[static_cast<size_t>(ref_of_hyp[j])]) {
        ++n_correct;
      }
    }
    ref_s += dur * n_ref;
    miss_s += dur * std::max(0, n_ref - n_hyp);
    fa_s += dur * std::max(0, n_hyp - n_ref);
    conf_s += dur * (std::min(n_ref, n_hyp) - n_correct);
  });

  report.total_ref_speech_s = ref_s;
  if (ref_s <= 0.0) {
    report.empty_reference = true;
    return report;
  }
  report.miss = miss_s / ref_s;
  report.fa = fa_s / ref_s;
  report.confusion = conf_s / ref_s;
  report.der = report.miss + report.fa + report.confusion;
  return report;
}

namespace {

PrecisionRecall pr_from_counts(int64_t tp, int64_t hyp_pos, int64_t ref_pos) {
  PrecisionRecall pr;
  pr.no_hyp_positives = hyp_pos == 0;
  pr.no_ref_positives = ref_pos == 0;
  pr.precision = hyp_pos == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(hyp_pos);
  pr.recall = ref_pos == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(ref_pos);
  return pr;
}

}  // namespace

VadOsdReport vad_osd_pr(const SegmentList& ref, const SegmentList& hyp, double frame_s) {
  std::vector<SpeakerIntervals> refs = collect(ref);
  std::vector<SpeakerIntervals> hyps = collect(hyp);
  double end = 0.0;
  for (const auto& si : refs)
    for (const auto& iv : si.intervals) end = std::max(end, iv.second);
  for (const auto& si : hyps)
    for (const auto& iv : si.intervals) end = std::max(end, iv.second);
  const int64_t frames = static_cast<int64_t>(std::ceil(end / frame_s - 1e-9));

  int64_t vad_tp = 0, vad_hyp = 0, vad_ref = 0;
  int64_t osd_tp = 0, osd_hyp = 0, osd_ref = 0;
  for (int64_t f = 0; f < frames; ++f) {
    const double mid = (static_cast<double>(f) + 0.5) * frame_s;
    int n_ref = 0, n_hyp = 0;
    for (const auto& si : refs) n_ref += si.active_at(mid);
    for (const auto& si : hyps) n_hyp += si.active_at(mid);
    const bool rv = n_ref >= 1, hv = n_hyp >= 1;
    const bool ro = n_ref >= 2, ho = n_hyp >= 2;
    vad_ref += rv;
    vad_hyp += hv;
    vad_tp += rv && hv;
    osd_ref += ro;
    osd_hyp += ho;
    osd_tp += ro && ho;
  }
  VadOsdReport report;
  report.vad = pr_from_counts(vad_tp, vad_hyp, vad_ref);
  report.osd = pr_from_counts(osd_tp, osd_hyp, osd_ref);
  return report;
}

void CountConfusion::record(int64_t ref_count, int64_t predicted_count) {
  const int64_t need = std::max(ref_count, predicted_count) + 1;
  if (static_cast<int64_t>(counts.size()) < need) {
    for (auto& row : counts) row.resize(static_cast<size_t>(need), 0);
    while (static_cast<int64_t>(counts.size()) < need) {
      counts.emplace_back(static_cast<size_t>(need), 0);
    }
  }
  counts[static_cast<size_t>(ref_count)][static_cast<size_t>(predicted_count)] += 1;
}

std::vector<int64_t> CountConfusion::row_sums() const {
  std::vector<int64_t> sums;
  for (const auto& row : counts) {
    int64_t s = 0;
    for (int64_t v : row) s += v;
    sums.push_back(s);
  }
  return sums;
}

double CountConfusion::diagonal_fraction() const {
  int64_t diag = 0, total = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    for (size_t j = 0; j < counts[i].size(); ++j) {
      total += counts[i][j];
      if (i == j) diag += counts[i][j];
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
}

std::string CountConfusion::to_csv() const {
  std::ostringstream os;
  os << "ref\\pred";
  for (size_t j = 0; j < counts.size(); ++j) os << "," << j;
  os << "\n";
  for (size_t i = 0; i < counts.size(); ++i) {
    os << i;
    for (size_t j = 0; j < counts[i].size(); ++j) os << "," << counts[i][j];
    os << "\n";
  }
  return os.str();
}

ScoreSummary score_recordings(const std::map<std::string, SegmentList>& ref,
                              const std::map<std::string, SegmentList>& hyp, double collar_s) {
  ScoreSummary summary;
  double err_s = 0.0, ref_s = 0.0, miss_s = 0.0, fa_s = 0.0, conf_s = 0.0;
  for (const auto& [id, ref_list] : ref) {
    SegmentList hyp_list;
    hyp_list.recording_id = id;
    auto it = hyp.find(id);
    if (it != hyp.end()) hyp_list = it->second;
    DerReport r = der(ref_list, hyp_list, collar_s);
    err_s += r.error_s();
    ref_s += r.total_ref_speech_s;
    miss_s += r.miss * r.total_ref_speech_s;
    fa_s += r.fa * r.total_ref_speech_s;
    conf_s += r.confusion * r.total_ref_speech_s;
    summary.per_recording.emplace(id, std::move(r));
  }
  summary.overall.total_ref_speech_s = ref_s;
  if (ref_s > 0.0) {
    summary.overall.miss = miss_s / ref_s;
    summary.overall.fa = fa_s / ref_s;
    summary.overall.confusion = conf_s / ref_s;
    summary.overall.der = err_s / ref_s;
  } else {
    summary.overall.empty_reference = true;
  }
  return summary;
}

}  // namespace percdia
