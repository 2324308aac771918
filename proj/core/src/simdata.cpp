#include "percdia/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace percdia {
namespace {

struct Turn {
  int64_t speaker;
  double start;
  double end;
};

std::string speaker_name(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "spk%02lld", static_cast<long long>(index));
  return buf;
}

// One sampled conversation; may leave a speaker silent (callers retry).
std::vector<Turn> sample_turns(const ScConfig& cfg, int64_t num_speakers, std::mt19937_64& rng) {
  std::exponential_distribution<double> turn_len(1.0 / cfg.turn_mean_s);
  std::exponential_distribution<double> pause_len(1.0 / cfg.pause_mean_s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // First round cycles through every speaker in shuffled order so small
  // recordings still voice everyone; afterwards the next speaker is uniform
  // among the others.
  std::vector<int64_t> first_round(static_cast<size_t>(num_speakers));
  std::iota(first_round.begin(), first_round.end(), 0);
  std::shuffle(first_round.begin(), first_round.end(), rng);

  const double min_turn = 2.0 * cfg.frame_period_s;
  const size_t max_turns =
      static_cast<size_t>(cfg.duration_s / min_turn) * 10 + 100;  // overlap_prob=1 cannot spin
  std::vector<Turn> turns;
  double cursor = 0.0;
  int64_t turn_index = 0;
  int64_t prev_speaker = -1;
  while (cursor < cfg.duration_s && turns.size() < max_turns) {
    int64_t speaker;
    if (turn_index < num_speakers) {
      speaker = first_round[static_cast<size_t>(turn_index)];
    } else if (num_speakers == 1) {
      speaker = 0;
    } else {
      speaker = static_cast<int64_t>(std::uniform_int_distribution<int64_t>(0, num_speakers - 2)(rng));
      if (speaker >= prev_speaker) ++speaker;
    }
    const double len = std::max(turn_len(rng), min_turn);
    const double start = std::min(cursor, cfg.duration_s - min_turn);
    const double end = std::min(start + len, cfg.duration_s);
    turns.push_back({speaker, start, end});
    prev_speaker = speaker;
    ++turn_index;

    if (unit(rng) < cfg.overlap_prob) {
      // Next turn begins before this one ends.
      const double overlap = std::min(pause_len(rng), 0.9 * (end - start));
      cursor = end - overlap;
    } else {
      cursor = end + pause_len(rng);
    }
  }
  return turns;
}

BinaryActivity rasterize(const std::vector<Turn>& turns, const ScConfig& cfg, int64_t num_speakers) {
  const int64_t t = static_cast<int64_t>(std::llround(cfg.duration_s / cfg.frame_period_s));
  BinaryActivity act;
  act.num_frames = t;
  for (int64_t s = 0; s < num_speakers; ++s) act.speaker_ids.push_back(speaker_name(s));
  act.values.assign(static_cast<size_t>(t * num_speakers), 0);
  for (const Turn& turn : turns) {
    // frame f is active when the turn covers its center (f + 0.5) * period
    int64_t first = static_cast<int64_t>(std::ceil(turn.start / cfg.frame_period_s - 0.5));
    int64_t last = static_cast<int64_t>(std::floor(turn.end / cfg.frame_period_s - 0.5));
    if (std::abs((last + 0.5) * cfg.frame_period_s - turn.end) < 1e-12) --last;  // half-open end
    for (int64_t f = std::max<int64_t>(first, 0); f <= std::min(last, t - 1); ++f) {
      act.set(f, turn.speaker, 1);
    }
  }
  return act;
}

bool all_speakers_active(const BinaryActivity& act) {
  for (int64_t s = 0; s < act.num_speakers(); ++s) {
    bool any = false;
    for (int64_t f = 0; f < act.num_frames && !any; ++f) any = act.at(f, s) != 0;
    if (!any) return false;
  }
  return true;
}

}  // namespace

void ScConfig::validate() const {
  if (min_speakers < 1 || max_speakers < min_speakers) {
    throw std::invalid_argument("speaker range must satisfy 1 <= min <= max");
  }
  if (duration_s <= 0 || pause_mean_s <= 0 || turn_mean_s <= 0 || frame_period_s <= 0) {
    throw std::invalid_argument("durations must be positive");
  }
  if (overlap_prob < 0.0 || overlap_prob > 1.0) {
    throw std::invalid_argument("overlap_prob must be in [0,1]");
  }
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
}

ReferenceLabels generate_labels(const ScConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const int64_t num_speakers =
      std::uniform_int_distribution<int64_t>(cfg.min_speakers, cfg.max_speakers)(rng);
  for (int attempt = 0; attempt < 100; ++attempt) {
    BinaryActivity act = rasterize(sample_turns(cfg, num_speakers, rng), cfg, num_speakers);
    if (!all_speakers_active(act)) continue;
    ReferenceLabels labels;
    labels.activity = std::move(act);
    labels.frame_period_s = cfg.frame_period_s;
    return labels;
  }
  throw std::runtime_error("could not voice all speakers; duration_s too short for " +
                           std::to_string(num_speakers) + " speakers");
}

Tensor sample_signatures(int64_t num_speakers, int64_t feature_dim, std::mt19937_64& rng) {
  Tensor sigs(Shape{num_speakers, feature_dim});
  double* data = sigs.raw().data();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int64_t s = 0; s < num_speakers; ++s) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) throw std::runtime_error("signature rejection sampling failed");
      double norm_sq = 0.0;
      for (int64_t j = 0; j < feature_dim; ++j) {
        data[s * feature_dim + j] = normal(rng);
        norm_sq += data[s * feature_dim + j] * data[s * feature_dim + j];
      }
      const double inv_norm = 1.0 / std::sqrt(norm_sq);
      for (int64_t j = 0; j < feature_dim; ++j) data[s * feature_dim + j] *= inv_norm;
      bool ok = true;
      for (int64_t p = 0; p < s && ok; ++p) {
        double cos = 0.0;
        for (int64_t j = 0; j < feature_dim; ++j) {
          cos += data[s * feature_dim + j] * data[p * feature_dim + j];
        }
        ok = std::abs(cos) < 0.5;
      }
      if (ok) break;
    }
  }
  return sigs;
}

FeatureSequence synth_features(const ReferenceLabels& labels, const Tensor& signatures,
                               const ScConfig& cfg, std::mt19937_64& rng) {
  const int64_t t = labels.num_frames();
  const int64_t s = labels.num_speakers();
  const int64_t f = cfg.feature_dim;
  if (signatures.rows() != s || signatures.cols() != f) {
    throw std::invalid_argument("signature matrix shape does not match labels/config");
  }
  Tensor features(Shape{t, f});
  double* out = features.raw().data();
  const double* sig = signatures.values().data();
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  for (int64_t i = 0; i < t; ++i) {
    double* row = out + i * f;
    if (cfg.noise_std > 0.0) {
      for (int64_t j = 0; j < f; ++j) row[j] = noise(rng);
    }
    for (int64_t k = 0; k < s; ++k) {
      if (labels.activity.at(i, k) == 0) continue;
      const double* sp = sig + k * f;
      for (int64_t j = 0; j < f; ++j) row[j] += cfg.signature_scale * sp[j];
    }
    for (int64_t j = 0; j < f; ++j) row[j] = static_cast<double>(static_cast<float>(row[j]));
  }
  FeatureSequence fs;
  fs.features = std::move(features);
  fs.frame_period_s = cfg.frame_period_s;
  return fs;
}

SimRecording generate_recording(const ScConfig& cfg, const std::string& recording_id, uint64_t seed) {
  std::mt19937_64 rng(seed);
  SimRecording rec;
  rec.recording_id = recording_id;
  rec.labels = generate_labels(cfg, rng);
  rec.signatures = sample_signatures(rec.labels.num_speakers(), cfg.feature_dim, rng);
  rec.features = synth_features(rec.labels, rec.signatures, cfg, rng);
  rec.features.recording_id = recording_id;
  return rec;
}

std::string write_dataset(const std::string& dir, const std::vector<SimRecording>& recordings) {
  std::filesystem::create_directories(dir);
  const std::string manifest_path = dir + "/manifest.tsv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot open " + manifest_path);
  for (const SimRecording& rec : recordings) {
    const std::string feat_name = rec.recording_id + ".dpft";
    const std::string rttm_name = rec.recording_id + ".rttm";
    write_dpft(dir + "/" + feat_name, rec.features);
    SegmentList segs =
        activity_to_segments(rec.labels.activity, rec.labels.frame_period_s, rec.recording_id);
    write_rttm(dir + "/" + rttm_name, {segs});
    manifest << rec.recording_id << "\t" << feat_name << "\t" << rttm_name << "\n";
  }
  if (!manifest) throw std::runtime_error("write failed for " + manifest_path);
  return manifest_path;
}

std::vector<SimRecording> read_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

  std::vector<SimRecording> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, feat, rttm;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, feat, '\t') || !std::getline(ls, rttm, '\t')) {
      throw std::runtime_error(manifest_path + ":" + std::to_string(lineno) +
                               ": expected 'id<TAB>features<TAB>rttm'");
    }
    SimRecording rec;
    rec.recording_id = id;
    rec.features = read_dpft((base / feat).string());
    rec.features.recording_id = id;
    auto parsed = parse_rttm((base / rttm).string());
    SegmentList segs = parsed.count(id) ? parsed.at(id) : SegmentList{};
    rec.labels.frame_period_s = rec.features.frame_period_s;
    rec.labels.activity =
        segments_to_activity(segs, rec.features.frame_period_s, rec.features.num_frames());
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace percdia
