#include "percdia/segments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace percdia {

void SegmentList::add(const std::string& speaker, double onset_s, double duration_s) {
  if (duration_s <= 0.0) throw std::invalid_argument("segment duration must be > 0");
  segments.push_back({speaker, onset_s, duration_s});
}

void SegmentList::sort_and_merge() {
  std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
    if (a.speaker_id != b.speaker_id) return a.speaker_id < b.speaker_id;
    return a.onset_s < b.onset_s;
  });
  std::vector<Segment> merged;
  for (const Segment& s : segments) {
    if (!merged.empty() && merged.back().speaker_id == s.speaker_id &&
        s.onset_s <= merged.back().offset_s() + 1e-9) {
      double end = std::max(merged.back().offset_s(), s.offset_s());
      merged.back().duration_s = end - merged.back().onset_s;
    } else {
      merged.push_back(s);
    }
  }
  segments = std::move(merged);
}

std::vector<std::string> SegmentList::speakers() const {
  std::set<std::string> uniq;
  for (const Segment& s : segments) uniq.insert(s.speaker_id);
  return {uniq.begin(), uniq.end()};
}

std::vector<Segment> SegmentList::for_speaker(const std::string& speaker) const {
  std::vector<Segment> out;
  for (const Segment& s : segments) {
    if (s.speaker_id == speaker) out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) { return a.onset_s < b.onset_s; });
  return out;
}

double SegmentList::total_speech_s() const {
  double t = 0.0;
  for (const Segment& s : segments) t += s.duration_s;
  return t;
}

Tensor ReferenceLabels::activity_tensor() const {
  const int64_t t = activity.num_frames, s = activity.num_speakers();
  Tensor out(Shape{t, s});
  double* v = out.raw().data();
  for (int64_t i = 0; i < t * s; ++i) v[i] = activity.values[static_cast<size_t>(i)] ? 1.0 : 0.0;
  return out;
}

SegmentList activity_to_segments(const BinaryActivity& activity, double frame_period_s,
                                 const std::string& recording_id) {
  SegmentList out;
  out.recording_id = recording_id;
  const int64_t t = activity.num_frames;
  for (int64_t s = 0; s < activity.num_speakers(); ++s) {
    int64_t run_start = -1;
    for (int64_t i = 0; i <= t; ++i) {
      const bool on = i < t && activity.at(i, s) != 0;
      if (on && run_start < 0) run_start = i;
      if (!on && run_start >= 0) {
        out.add(activity.speaker_ids[static_cast<size_t>(s)], run_start * frame_period_s,
                (i - run_start) * frame_period_s);
        run_start = -1;
      }
    }
  }
  std::sort(out.segments.begin(), out.segments.end(), [](const Segment& a, const Segment& b) {
    if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
    return a.speaker_id < b.speaker_id;
  });
  return out;
}

BinaryActivity segments_to_activity(const SegmentList& segments, double frame_period_s,
                                    int64_t num_frames) {
  BinaryActivity act;
  act.speaker_ids = segments.speakers();
  if (num_frames < 0) {
    double end = 0.0;
    for (const Segment& s : segments.segments) end = std::max(end, s.offset_s());
    num_frames = static_cast<int64_t>(std::llround(end / frame_period_s));
  }
  act.num_frames = num_frames;
  act.values.assign(static_cast<size_t>(num_frames) * act.speaker_ids.size(), 0);
  for (const Segment& s : segments.segments) {
    const int64_t spk =
        std::find(act.speaker_ids.begin(), act.speaker_ids.end(), s.speaker_id) - act.speaker_ids.begin();
    const int64_t first = static_cast<int64_t>(std::llround(s.onset_s / frame_period_s));
    const int64_t last = static_cast<int64_t>(std::llround(s.offset_s() / frame_period_s));
    for (int64_t f = std::max<int64_t>(first, 0); f < std::min(last, num_frames); ++f) act.set(f, spk, 1);
  }
  return act;
}

void append_rttm(std::ostream& out, const SegmentList& list) {
  char buf[256];
  for (const Segment& s : list.segments) {
    std::snprintf(buf, sizeof(buf), "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                  list.recording_id.c_str(), s.onset_s, s.duration_s, s.speaker_id.c_str());
    out << buf;
  }
}

void write_rttm(const std::string& path, const std::vector<SegmentList>& recordings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const SegmentList& r : recordings) append_rttm(out, r);
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::map<std::string, SegmentList> parse_rttm_text(const std::string& text, const std::string& origin) {
  std::map<std::string, SegmentList> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ls >> tok) fields.push_back(tok);
    if (fields.empty() || fields[0] != "SPEAKER") continue;
    if (fields.size() != 10) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": SPEAKER line has " +
                               std::to_string(fields.size()) + " fields, expected 10");
    }
    double onset, dur;
    try {
      size_t pos1 = 0, pos2 = 0;
      onset = std::stod(fields[3], &pos1);
      dur = std::stod(fields[4], &pos2);
      if (pos1 != fields[3].size() || pos2 != fields[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": malformed numeric field in '" +
                               line + "'");
    }
    SegmentList& list = out[fields[1]];
    list.recording_id = fields[1];
    list.add(fields[7], onset, dur);
  }
  return out;
}

std::map<std::string, SegmentList> parse_rttm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open RTTM file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rttm_text(ss.str(), path);
}

}  // namespace percdia
