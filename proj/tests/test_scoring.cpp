#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "percdia/scoring.hpp"

using namespace percdia;

namespace {

SegmentList make(const std::string& rec,
                 std::initializer_list<std::tuple<const char*, double, double>> segs) {
  SegmentList list;
  list.recording_id = rec;
  for (const auto& [spk, on, dur] : segs) list.add(spk, on, dur);
  return list;
}

// Brute-force oracle: 1 ms frames, exhaustive speaker mapping, NIST
// accounting; independent of the boundary-sweep implementation.
DerReport oracle_der(const SegmentList& ref, const SegmentList& hyp, double collar_s) {
  constexpr double kStep = 0.001;
  double end = 0.0;
  for (const Segment& s : ref.segments) end = std::max(end, s.offset_s());
  for (const Segment& s : hyp.segments) end = std::max(end, s.offset_s());
  const int64_t frames = static_cast<int64_t>(std::llround(end / kStep)) + 1;

  std::vector<std::string> ref_ids = ref.speakers(), hyp_ids = hyp.speakers();
  const size_t nr = ref_ids.size(), nh = hyp_ids.size();
  std::vector<std::vector<char>> ra(nr, std::vector<char>(frames, 0));
  std::vector<std::vector<char>> ha(nh, std::vector<char>(frames, 0));
  auto fill = [&](const SegmentList& list, const std::vector<std::string>& ids,
                  std::vector<std::vector<char>>& out) {
    for (const Segment& s : list.segments) {
      const size_t idx = std::find(ids.begin(), ids.end(), s.speaker_id) - ids.begin();
      const int64_t a = std::llround(s.onset_s / kStep);
      const int64_t b = std::llround(s.offset_s() / kStep);
      for (int64_t f = std::max<int64_t>(a, 0); f < std::min(b, frames); ++f) out[idx][f] = 1;
    }
  };
  fill(ref, ref_ids, ra);
  fill(hyp, hyp_ids, ha);

  std::vector<char> scored(frames, 1);
  if (collar_s > 0.0) {
    for (const Segment& s : ref.segments) {
      for (double b : {s.onset_s, s.offset_s()}) {
        const int64_t lo = std::llround((b - collar_s) / kStep);
        const int64_t hi = std::llround((b + collar_s) / kStep);
        for (int64_t f = std::max<int64_t>(lo, 0); f < std::min(hi, frames); ++f) scored[f] = 0;
      }
    }
  }

  DerReport report;
  if (nr == 0) {
    report.empty_reference = true;
    return report;
  }

  // exhaustive max-overlap mapping over all injections of the smaller side
  const size_t n = std::max(nr, nh);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> overlap(nr * std::max<size_t>(nh, 1), 0.0);
  for (int64_t f = 0; f < frames; ++f) {
    if (!scored[f]) continue;
    for (size_t i = 0; i < nr; ++i) {
      if (!ra[i][f]) continue;
      for (size_t j = 0; j < nh; ++j) {
        if (ha[j][f]) overlap[i * nh + j] += kStep;
      }
    }
  }
  std::vector<int> best_map(nr, -1);
  double best = -1.0;
  do {
    double total = 0.0;
    for (size_t i = 0; i < nr; ++i) {
      if (perm[i] < static_cast<int>(nh)) total += overlap[i * nh + perm[i]];
    }
    if (total > best) {
      best = total;
      for (size_t i = 0; i < nr; ++i) best_map[i] = perm[i] < static_cast<int>(nh) ? perm[i] : -1;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  double miss = 0.0, fa = 0.0, conf = 0.0, ref_time = 0.0;
  for (int64_t f = 0; f < frames; ++f) {
    if (!scored[f]) continue;
    int n_ref = 0, n_hyp = 0, n_correct = 0;
    for (size_t i = 0; i < nr; ++i) n_ref += ra[i][f];
    for (size_t j = 0; j < nh; ++j) n_hyp += ha[j][f];
    for (size_t i = 0; i < nr; ++i) {
      if (ra[i][f] && best_map[i] >= 0 && ha[best_map[i]][f]) ++n_correct;
    }
    ref_time += kStep * n_ref;
    miss += kStep * std::max(0, n_ref - n_hyp);
    fa += kStep * std::max(0, n_hyp - n_ref);
    conf += kStep * (std::min(n_ref, n_hyp) - n_correct);
  }
  report.total_ref_speech_s = ref_time;
  if (ref_time <= 0) {
    report.empty_reference = true;
    return report;
  }
  report.miss = miss / ref_time;
  report.fa = fa / ref_time;
  report.confusion = conf / ref_time;
  report.der = report.miss + report.fa + report.confusion;
  return report;
}

double grid(std::mt19937_64& rng, double lo, double hi) {
  // times on the 1 ms grid so the discretized oracle is exact
  std::uniform_real_distribution<double> u(lo, hi);
  return std::round(u(rng) * 1000.0) / 1000.0;
}

}  // namespace

TEST_CASE("identical hypothesis scores zero") {
  SegmentList ref = make("r", {{"a", 0.0, 10.0}, {"b", 4.0, 3.0}});
  DerReport r = der(ref, ref, 0.0);
  CHECK(r.der == doctest::Approx(0.0));
  CHECK(r.miss == 0.0);
  CHECK(r.fa == 0.0);
  CHECK(r.confusion == 0.0);
  DerReport rc = der(ref, ref, 0.25);
  CHECK(rc.der == doctest::Approx(0.0));
}

TEST_CASE("hand-derived miss case") {
  // ref spk1 0-10s, hyp 0-9s, collar 0: miss 10%
  SegmentList ref = make("r", {{"spk1", 0.0, 10.0}});
  SegmentList hyp = make("r", {{"spk_a", 0.0, 9.0}});
  DerReport r = der(ref, hyp, 0.0);
  CHECK(r.miss == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(r.fa == doctest::Approx(0.0));
  CHECK(r.confusion == doctest::Approx(0.0));
  CHECK(r.der == doctest::Approx(0.10).epsilon(1e-12));
}

TEST_CASE("hand-derived confusion case") {
  // ref spk1 0-10; hyp spk_a 0-5 + spk_b 5-10: one kept, 50% confusion
  SegmentList ref = make("r", {{"spk1", 0.0, 10.0}});
  SegmentList hyp = make("r", {{"spk_a", 0.0, 5.0}, {"spk_b", 5.0, 5.0}});
  DerReport r = der(ref, hyp, 0.0);
  CHECK(r.confusion == doctest::Approx(0.50).epsilon(1e-12));
  CHECK(r.miss == doctest::Approx(0.0));
  CHECK(r.fa == doctest::Approx(0.0));
  CHECK(r.der == doctest::Approx(0.50).epsilon(1e-12));
}

TEST_CASE("components always sum to the DER") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    SegmentList ref, hyp;
    ref.recording_id = hyp.recording_id = "r";
    for (int s = 0; s < 2; ++s) {
      for (int k = 0; k < 3; ++k) {
        ref.add("r" + std::to_string(s), grid(rng, 0, 20), grid(rng, 0.1, 4));
        hyp.add("h" + std::to_string(s), grid(rng, 0, 20), grid(rng, 0.1, 4));
      }
    }
    DerReport r = der(ref, hyp, 0.25);
    CHECK(r.der == doctest::Approx(r.miss + r.fa + r.confusion).epsilon(1e-9));
    CHECK(r.miss >= 0.0);
    CHECK(r.fa >= 0.0);
    CHECK(r.confusion >= 0.0);
  }
}

TEST_CASE("continuous-time DER matches the 1 ms brute-force oracle") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n_spk(1, 3), n_seg(1, 4);
  const double collars[] = {0.0, 0.25};
  for (int trial = 0; trial < 200; ++trial) {
    SegmentList ref, hyp;
    ref.recording_id = hyp.recording_id = "r";
    const int nr = n_spk(rng), nh = n_spk(rng);
    for (int s = 0; s < nr; ++s) {
      for (int k = n_seg(rng); k > 0; --k) ref.add("r" + std::to_string(s), grid(rng, 0, 15), grid(rng, 0.2, 5));
    }
    for (int s = 0; s < nh; ++s) {
      for (int k = n_seg(rng); k > 0; --k) hyp.add("h" + std::to_string(s), grid(rng, 0, 15), grid(rng, 0.2, 5));
    }
    const double collar = collars[trial % 2];
    DerReport fast = der(ref, hyp, collar);
    DerReport slow = oracle_der(ref, hyp, collar);
    CHECK(std::abs(fast.der - slow.der) < 1e-3);  // 0.1% absolute
    CHECK(std::abs(fast.miss - slow.miss) < 1e-3);
    CHECK(std::abs(fast.fa - slow.fa) < 1e-3);
    CHECK(std::abs(fast.confusion - slow.confusion) < 1e-3);
  }
}

TEST_CASE("DER is invariant to hypothesis relabeling and segment splitting") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    SegmentList ref, hyp;
    ref.recording_id = hyp.recording_id = "r";
    for (int s = 0; s < 2; ++s) {
      for (int k = 0; k < 3; ++k) {
        ref.add("r" + std::to_string(s), grid(rng, 0, 12), grid(rng, 0.2, 3));
        hyp.add("h" + std::to_string(s), grid(rng, 0, 12), grid(rng, 0.2, 3));
      }
    }
    DerReport base = der(ref, hyp, 0.0);

    // relabel hypothesis speakers
    SegmentList renamed = hyp;
    for (Segment& s : renamed.segments) s.speaker_id = "x_" + s.speaker_id;
    CHECK(std::abs(der(ref, renamed, 0.0).der - base.der) < 1e-9);

    // split every hypothesis segment into two adjacent pieces
    SegmentList split;
    split.recording_id = "r";
    for (const Segment& s : hyp.segments) {
      split.add(s.speaker_id, s.onset_s, s.duration_s / 2);
      split.add(s.speaker_id, s.onset_s + s.duration_s / 2, s.duration_s / 2);
    }
    CHECK(std::abs(der(ref, split, 0.0).der - base.der) < 1e-9);
  }
}

TEST_CASE("collar is non-increasing for boundary errors") {
  SegmentList ref = make("r", {{"a", 1.0, 5.0}});
  SegmentList hyp = make("r", {{"h", 1.1, 4.8}});  // misses 100 ms at each edge
  double prev = 1.0;
  for (double collar : {0.0, 0.05, 0.1, 0.25}) {
    const double d = der(ref, hyp, collar).der;
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
  CHECK(der(ref, hyp, 0.25).der == doctest::Approx(0.0));
}

TEST_CASE("empty reference returns zero with a warning flag") {
  SegmentList ref;
  ref.recording_id = "r";
  SegmentList hyp = make("r", {{"a", 0.0, 5.0}});
  DerReport r = der(ref, hyp, 0.0);
  CHECK(r.der == 0.0);
  CHECK(r.empty_reference);
}

TEST_CASE("RTTM parser") {
  const std::string text =
      "SPEAKER rec1 1 0.500 2.000 <NA> <NA> alice <NA> <NA>\n"
      ";; comment line ignored\n"
      "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown alice <NA>\n"
      "SPEAKER  rec1  1  3.000  1.000  <NA> <NA> alice <NA> <NA>\n"
      "SPEAKER rec2 1 0.000 1.000 <NA> <NA> bob <NA> <NA>\n";
  auto parsed = parse_rttm_text(text, "test");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed.at("rec1").segments.size() == 2);  // same speaker kept as two segments
  CHECK(parsed.at("rec2").segments.size() == 1);
  CHECK(parsed.at("rec1").segments[0].speaker_id == "alice");

  CHECK_THROWS_WITH_AS(parse_rttm_text("SPEAKER rec 1 0.0 1.0 <NA> <NA> spk\n", "test"),
                       doctest::Contains("test:1"), std::runtime_error);
  CHECK_THROWS_AS(parse_rttm_text("SPEAKER rec 1 zero 1.0 <NA> <NA> spk <NA> <NA>\n", "test"),
                  std::runtime_error);
}

TEST_CASE("RTTM write and parse round trip") {
  SegmentList list = make("rec9", {{"s0", 0.1, 0.25}, {"s1", 0.35, 1.0}});
  const std::string path = (std::filesystem::temp_directory_path() / "percdia_rt.rttm").string();
  write_rttm(path, {list});
  auto parsed = parse_rttm(path);
  REQUIRE(parsed.count("rec9") == 1);
  REQUIRE(parsed.at("rec9").segments.size() == 2);
  CHECK(parsed.at("rec9").segments[0].onset_s == doctest::Approx(0.1));
  CHECK(parsed.at("rec9").segments[0].duration_s == doctest::Approx(0.25));
  std::filesystem::remove(path);
}

TEST_CASE("VAD and OSD precision recall") {
  SegmentList ref = make("r", {{"a", 0.0, 10.0}, {"b", 4.0, 2.0}});  // overlap 4-6
  CHECK(vad_osd_pr(ref, ref).vad.precision == doctest::Approx(1.0));
  CHECK(vad_osd_pr(ref, ref).vad.recall == doctest::Approx(1.0));
  CHECK(vad_osd_pr(ref, ref).osd.precision == doctest::Approx(1.0));
  CHECK(vad_osd_pr(ref, ref).osd.recall == doctest::Approx(1.0));

  SegmentList silent;
  silent.recording_id = "r";
  VadOsdReport silent_report = vad_osd_pr(ref, silent);
  CHECK(silent_report.vad.recall == doctest::Approx(0.0));
  CHECK(silent_report.vad.precision == doctest::Approx(1.0));  // convention, flagged
  CHECK(silent_report.vad.no_hyp_positives);

  // ref overlap 2 s of 10 s; hyp overlap covers 1 s of it plus 1 s false
  SegmentList ref2 = make("r", {{"a", 0.0, 10.0}, {"b", 4.0, 2.0}});
  SegmentList hyp2 = make("r", {{"x", 0.0, 10.0}, {"y", 5.0, 2.0}});  // overlap 5-7
  VadOsdReport pr2 = vad_osd_pr(ref2, hyp2);
  CHECK(pr2.osd.precision == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(pr2.osd.recall == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("speaker count confusion bookkeeping") {
  CountConfusion c;
  c.record(1, 1);
  c.record(2, 2);
  c.record(2, 3);
  c.record(3, 3);
  auto sums = c.row_sums();
  CHECK(sums[1] == 1);
  CHECK(sums[2] == 2);
  CHECK(sums[3] == 1);
  CHECK(c.diagonal_fraction() == doctest::Approx(0.75));
  const std::string csv = c.to_csv();
  CHECK(csv.find("ref\\pred") == 0);

  CountConfusion diag;
  for (int i = 1; i <= 4; ++i) diag.record(i, i);
  CHECK(diag.diagonal_fraction() == doctest::Approx(1.0));

  CountConfusion column;
  for (int i = 1; i <= 4; ++i) column.record(i, 2);
  CHECK(column.counts[1][2] == 1);
  CHECK(column.counts[3][2] == 1);
}

TEST_CASE("aggregate scoring over recordings") {
  SegmentList ref1 = make("r1", {{"a", 0.0, 10.0}});
  SegmentList hyp1 = make("r1", {{"x", 0.0, 9.0}});
  SegmentList ref2 = make("r2", {{"a", 0.0, 10.0}});
  SegmentList hyp2 = make("r2", {{"x", 0.0, 10.0}});
  std::map<std::string, SegmentList> ref{{"r1", ref1}, {"r2", ref2}};
  std::map<std::string, SegmentList> hyp{{"r1", hyp1}, {"r2", hyp2}};
  ScoreSummary s = score_recordings(ref, hyp, 0.0);
  CHECK(s.per_recording.at("r1").der == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(s.per_recording.at("r2").der == doctest::Approx(0.0));
  CHECK(s.overall.der == doctest::Approx(0.05).epsilon(1e-12));  // 1 s of 20 s
}
