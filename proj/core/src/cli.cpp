#include "percdia/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "percdia/eda.hpp"
#include "percdia/inference.hpp"
#include "percdia/model.hpp"
#include "percdia/scoring.hpp"
#include "percdia/simdata.hpp"
#include "percdia/trainer.hpp"

namespace percdia::cli {
namespace {

constexpr const char* kVersion = "percdia 0.1.0";

// Splits [0, n) across `jobs` worker threads; fn(i) must be independent per i.
void parallel_for(int64_t n, int64_t jobs, const std::function<void(int64_t)>& fn) {
  jobs = std::max<int64_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
  for (int64_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RunConfig load_run_config(const std::string& path) { return RunConfig::load(path); }

int cmd_simulate(const std::string& out_dir, int64_t num_recordings, int64_t per_count,
                 ScConfig cfg, uint64_t seed, int64_t jobs) {
  cfg.seed = seed;
  std::vector<SimRecording> recordings;
  std::vector<std::pair<std::string, ScConfig>> plan;
  if (per_count > 0) {
    // Fixed-count protocol: per_count recordings for every speaker count in
    // [min_speakers, max_speakers].
    for (int64_t s = cfg.min_speakers; s <= cfg.max_speakers; ++s) {
      for (int64_t i = 0; i < per_count; ++i) {
        ScConfig one = cfg;
        one.min_speakers = one.max_speakers = s;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "sc_%02lld_%04lld", static_cast<long long>(s),
                      static_cast<long long>(i));
        plan.emplace_back(buf, one);
      }
    }
  } else {
    for (int64_t i = 0; i < num_recordings; ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "sc_%06lld", static_cast<long long>(i));
      plan.emplace_back(buf, cfg);
    }
  }
  recordings.resize(plan.size());
  parallel_for(static_cast<int64_t>(plan.size()), jobs, [&](int64_t i) {
    recordings[static_cast<size_t>(i)] = generate_recording(
        plan[static_cast<size_t>(i)].second, plan[static_cast<size_t>(i)].first,
        seed + 0x51a3 * static_cast<uint64_t>(i + 1));
  });
  const std::string manifest = write_dataset(out_dir, recordings);
  std::cout << "wrote " << recordings.size() << " recordings, manifest " << manifest << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_dir,
              const std::string& init_checkpoint, TrainMode mode, int64_t seed_override,
              int64_t average_last) {
  RunConfig config = load_run_config(config_path);
  if (seed_override >= 0) {
    config.train.seed = static_cast<uint64_t>(seed_override);
    config.model.seed = static_cast<uint64_t>(seed_override);
  }
  std::vector<SimRecording> data = read_dataset(data_path);
  if (data.empty()) {
    std::cerr << "warning: manifest " << data_path << " lists no recordings\n";
    return 1;
  }

  ParamStore params;
  if (!init_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(init_checkpoint);
    if (!ckpt.config.model.same_architecture(config.model)) {
      throw std::runtime_error("checkpoint " + init_checkpoint +
                               " architecture does not match config " + config_path);
    }
    params = std::move(ckpt.params);
  } else {
    params = init_params(config.model);
  }

  TrainResult result = train(params, config, data, out_dir, mode);
  if (average_last > 0 && !result.checkpoint_paths.empty()) {
    Checkpoint avg = average_recent_checkpoints(result.checkpoint_paths, average_last);
    const std::string avg_path = out_dir + "/checkpoint_averaged.dpck";
    save_checkpoint(avg_path, avg.config, avg.params);
    std::cout << "averaged " << std::min<size_t>(static_cast<size_t>(average_last),
                                                 result.checkpoint_paths.size())
              << " checkpoints into " << avg_path << "\n";
  }
  std::cout << "trained " << result.steps << " steps, metrics " << result.metrics_path << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& features_path,
              const std::string& data_manifest, const std::string& out_path,
              const InferenceOptions& options, int64_t jobs) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);

  std::vector<FeatureSequence> inputs;
  if (!data_manifest.empty()) {
    for (SimRecording& rec : read_dataset(data_manifest)) inputs.push_back(std::move(rec.features));
  } else {
    inputs.push_back(read_dpft(features_path));
  }

  std::vector<SegmentList> results(inputs.size());
  parallel_for(static_cast<int64_t>(inputs.size()), jobs, [&](int64_t i) {
    const FeatureSequence& fs = inputs[static_cast<size_t>(i)];
    if (fs.num_frames() == 0) {
      std::cerr << "warning: empty feature sequence " << fs.recording_id << "\n";
      results[static_cast<size_t>(i)].recording_id = fs.recording_id;
      return;
    }
    results[static_cast<size_t>(i)] = infer_file(ckpt.params, ckpt.config.model, fs, options);
  });
  write_rttm(out_path, results);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path, double collar,
              const std::string& csv_path, bool with_pr) {
  auto ref = parse_rttm(ref_path);
  auto hyp = parse_rttm(hyp_path);
  ScoreSummary summary = score_recordings(ref, hyp, collar);

  std::ostringstream csv;
  csv << "recording,der,miss,fa,confusion,ref_speech_s\n";
  char line[256];
  for (const auto& [id, r] : summary.per_recording) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.3f\n", id.c_str(), r.der, r.miss,
                  r.fa, r.confusion, r.total_ref_speech_s);
    csv << line;
  }
  const DerReport& o = summary.overall;
  std::snprintf(line, sizeof(line), "OVERALL,%.6f,%.6f,%.6f,%.6f,%.3f\n", o.der, o.miss, o.fa,
                o.confusion, o.total_ref_speech_s);
  csv << line;
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << csv.str();
    if (!out) throw std::runtime_error("cannot write " + csv_path);
  }

  std::printf("%-24s %8s %8s %8s %8s\n", "recording", "DER%", "miss%", "FA%", "conf%");
  for (const auto& [id, r] : summary.per_recording) {
    std::printf("%-24s %8.2f %8.2f %8.2f %8.2f\n", id.c_str(), 100 * r.der, 100 * r.miss, 100 * r.fa,
                100 * r.confusion);
  }
  std::printf("%-24s %8.2f %8.2f %8.2f %8.2f\n", "OVERALL", 100 * o.der, 100 * o.miss, 100 * o.fa,
              100 * o.confusion);

  if (with_pr) {
    for (const auto& [id, ref_list] : ref) {
      auto it = hyp.find(id);
      SegmentList hyp_list = it == hyp.end() ? SegmentList{} : it->second;
      VadOsdReport pr = vad_osd_pr(ref_list, hyp_list);
      std::printf("%-24s VAD P %.3f R %.3f | OSD P %.3f R %.3f\n", id.c_str(), pr.vad.precision,
                  pr.vad.recall, pr.osd.precision, pr.osd.recall);
    }
  }
  return 0;
}

int cmd_count_params(const std::string& config_path, const std::string& arch) {
  RunConfig config = load_run_config(config_path);
  if (arch == "eda") {
    EdaConfig eda;
    eda.max_attractors = config.model.decoder.num_attractors;
    const int64_t total = count_eda_model_params(config.model.encoder, config.model.feature_dim, eda);
    std::printf("%-20s %12lld\n", "eda-model total", static_cast<long long>(total));
    return 0;
  }
  CountBreakdown breakdown = count_params_breakdown(config.model);
  for (const auto& [module, n] : breakdown.by_module) {
    std::printf("%-20s %12lld\n", module.c_str(), static_cast<long long>(n));
  }
  std::printf("%-20s %12lld (%.2fM)\n", "total", static_cast<long long>(breakdown.total),
              static_cast<double>(breakdown.total) / 1e6);
  return 0;
}

int cmd_bench_decoder(const std::string& minutes_csv, int64_t model_dim, int64_t reps,
                      const std::string& out_csv, uint64_t seed, int64_t eda_hidden) {
  std::vector<double> minutes;
  std::stringstream ss(minutes_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) minutes.push_back(std::stod(tok));
  if (minutes.empty()) throw std::runtime_error("--minutes list is empty");

  DecoderConfig dec;
  dec.num_attractors = 10;
  ModelConfig cfg;
  cfg.encoder.model_dim = model_dim;
  cfg.decoder = dec;
  cfg.seed = seed;
  ParamStore perceiver_params = init_params(cfg);

  EdaConfig eda;
  eda.hidden_dim = eda_hidden;
  eda.max_attractors = dec.num_attractors;
  eda.existence_threshold = 0.0;  // always decode the full attractor budget
  ParamStore eda_params = init_eda_params(eda, model_dim, seed);

  std::ostringstream csv;
  csv << "frames,perceiver_ms,eda_ms\n";
  std::mt19937_64 rng(seed);
  for (double m : minutes) {
    const int64_t frames = static_cast<int64_t>(m * 60.0 / 0.1);  // 100 ms frames
    Tensor embeddings = Tensor::randn(Shape{frames, model_dim}, rng, 1.0);
    double best_perc = 1e300, best_eda = 1e300;
    for (int64_t r = 0; r < reps; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      AttractorSet a = decode(embeddings, perceiver_params, cfg.decoder, model_dim);
      auto t1 = std::chrono::steady_clock::now();
      AttractorSet b = eda_decode(embeddings, eda_params, eda, seed + static_cast<uint64_t>(r));
      auto t2 = std::chrono::steady_clock::now();
      (void)a;
      (void)b;
      best_perc = std::min(best_perc, std::chrono::duration<double, std::milli>(t1 - t0).count());
      best_eda = std::min(best_eda, std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    char line[128];
    std::snprintf(line, sizeof(line), "%lld,%.3f,%.3f\n", static_cast<long long>(frames), best_perc,
                  best_eda);
    csv << line;
    std::cout << line;
  }
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    out << csv.str();
    if (!out) throw std::runtime_error("cannot write " + out_csv);
  }
  return 0;
}

int cmd_confusion(const std::string& checkpoint_path, const std::string& data_manifest,
                  const std::string& out_csv, double exist_thresh, int64_t jobs) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::vector<SimRecording> data = read_dataset(data_manifest);

  std::vector<std::pair<int64_t, int64_t>> pairs(data.size());
  parallel_for(static_cast<int64_t>(data.size()), jobs, [&](int64_t i) {
    const SimRecording& rec = data[static_cast<size_t>(i)];
    ForwardOutput fwd = forward(rec.features, ckpt.params, ckpt.config.model);
    pairs[static_cast<size_t>(i)] = {rec.labels.num_speakers(),
                                     predicted_speaker_count(fwd, exist_thresh)};
  });

  CountConfusion confusion;
  for (auto& [ref_count, pred] : pairs) confusion.record(ref_count, pred);
  const std::string csv = confusion.to_csv();
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    out << csv;
    if (!out) throw std::runtime_error("cannot write " + out_csv);
  }
  std::cout << csv;
  std::printf("diagonal fraction %.3f over %zu recordings\n", confusion.diagonal_fraction(),
              pairs.size());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
#if defined(__GLIBC__)
  // Long sequences allocate score matrices in the tens of MB; keeping them on
  // the heap instead of fresh mmaps avoids refaulting the pages every pass.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"End-to-end neural diarization with a Perceiver attractor decoder"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a simulated-conversation dataset");
  std::string sim_out;
  int64_t sim_n = 10, sim_per_count = 0, sim_jobs = 1;
  uint64_t sim_seed = 0;
  ScConfig sc;
  sim->add_option("--out", sim_out, "Output dataset directory")->required();
  sim->add_option("--num-recordings", sim_n, "Number of recordings");
  sim->add_option("--per-count", sim_per_count,
                  "Generate this many recordings per speaker count in [min,max]");
  sim->add_option("--min-speakers", sc.min_speakers, "Minimum speakers per recording");
  sim->add_option("--max-speakers", sc.max_speakers, "Maximum speakers per recording");
  sim->add_option("--duration", sc.duration_s, "Recording duration in seconds");
  sim->add_option("--pause-mean", sc.pause_mean_s, "Mean pause length in seconds");
  sim->add_option("--overlap-prob", sc.overlap_prob, "Probability a turn overlaps the previous one");
  sim->add_option("--turn-mean", sc.turn_mean_s, "Mean turn length in seconds");
  sim->add_option("--feature-dim", sc.feature_dim, "Synthetic feature dimension");
  sim->add_option("--signature-scale", sc.signature_scale, "Speaker signature scale");
  sim->add_option("--noise-std", sc.noise_std, "Feature noise standard deviation");
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--jobs", sim_jobs, "Parallel workers");

  // train / adapt / finetune
  struct TrainArgs {
    std::string config, data, out, init;
    int64_t seed = -1;
    int64_t average_last = 0;
  };
  TrainArgs train_args, adapt_args, ft_args;
  auto add_train_opts = [](CLI::App* cmd, TrainArgs& a, bool init_required) {
    cmd->add_option("--config", a.config, "Run configuration file")->required();
    cmd->add_option("--data", a.data, "Dataset manifest")->required();
    cmd->add_option("--out", a.out, "Output directory")->required();
    auto* init = cmd->add_option("--init", a.init, "Initial checkpoint");
    if (init_required) init->required();
    cmd->add_option("--seed", a.seed, "Seed override");
    cmd->add_option("--average-last", a.average_last, "Also write the mean of the last K checkpoints");
  };
  auto* train_cmd = app.add_subcommand("train", "Train from random initialization");
  add_train_opts(train_cmd, train_args, false);
  auto* adapt_cmd = app.add_subcommand("adapt", "Continue training from a checkpoint");
  add_train_opts(adapt_cmd, adapt_args, true);
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune from a checkpoint at fixed ft_lr");
  add_train_opts(ft_cmd, ft_args, true);

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Run diarization and write RTTM");
  std::string inf_ckpt, inf_features, inf_data, inf_out;
  InferenceOptions inf_opts;
  bool inf_no_median = false;
  int64_t inf_jobs = 1;
  infer_cmd->add_option("--checkpoint", inf_ckpt, "Model checkpoint")->required();
  infer_cmd->add_option("--features", inf_features, "Single DPFT feature file");
  infer_cmd->add_option("--data", inf_data, "Dataset manifest (batch inference)");
  infer_cmd->add_option("--out", inf_out, "Output RTTM path")->required();
  infer_cmd->add_option("--act-thresh", inf_opts.activity_threshold, "Activity threshold");
  infer_cmd->add_option("--exist-thresh", inf_opts.existence_threshold, "Attractor existence threshold");
  infer_cmd->add_option("--median-window", inf_opts.median_window, "Median filter window (odd)");
  infer_cmd->add_flag("--no-median", inf_no_median, "Disable median filtering (collar 0 protocol)");
  infer_cmd->add_option("--subsample", inf_opts.subsample, "Feature stacking stride (10 or 5)");
  infer_cmd->add_option("--jobs", inf_jobs, "Parallel workers");

  // score
  auto* score_cmd = app.add_subcommand("score", "Score hypothesis RTTM against reference");
  std::string score_ref, score_hyp, score_csv;
  double score_collar = 0.0;
  bool score_pr = false;
  score_cmd->add_option("--ref", score_ref, "Reference RTTM")->required();
  score_cmd->add_option("--hyp", score_hyp, "Hypothesis RTTM")->required();
  score_cmd->add_option("--collar", score_collar, "Forgiveness collar in seconds");
  score_cmd->add_option("--csv", score_csv, "Write per-recording CSV here");
  score_cmd->add_flag("--pr", score_pr, "Also print VAD/OSD precision and recall");

  // count-params
  auto* count_cmd = app.add_subcommand("count-params", "Print the learnable-parameter breakdown");
  std::string count_config, count_arch = "perceiver";
  count_cmd->add_option("--config", count_config, "Run configuration file")->required();
  count_cmd->add_option("--arch", count_arch, "perceiver|eda")->check(CLI::IsMember({"perceiver", "eda"}));

  // bench-decoder
  auto* bench_cmd = app.add_subcommand("bench-decoder", "Time the attractor decoders over a length sweep");
  std::string bench_minutes = "1,10,60", bench_csv;
  int64_t bench_dim = 128, bench_reps = 3, bench_hidden = 256;
  uint64_t bench_seed = 0;
  bench_cmd->add_option("--minutes", bench_minutes, "Comma-separated recording lengths in minutes");
  bench_cmd->add_option("--model-dim", bench_dim, "Frame embedding dimension");
  bench_cmd->add_option("--reps", bench_reps, "Repetitions per point (best time kept)");
  bench_cmd->add_option("--eda-hidden", bench_hidden, "EDA LSTM hidden size");
  bench_cmd->add_option("--out", bench_csv, "Write CSV here");
  bench_cmd->add_option("--seed", bench_seed, "Random seed");

  // confusion
  auto* conf_cmd = app.add_subcommand("confusion", "Speaker-count confusion matrix over a dataset");
  std::string conf_ckpt, conf_data, conf_csv;
  double conf_thresh = 0.5;
  int64_t conf_jobs = 1;
  conf_cmd->add_option("--checkpoint", conf_ckpt, "Model checkpoint")->required();
  conf_cmd->add_option("--data", conf_data, "Dataset manifest")->required();
  conf_cmd->add_option("--out", conf_csv, "Write CSV here");
  conf_cmd->add_option("--exist-thresh", conf_thresh, "Attractor existence threshold");
  conf_cmd->add_option("--jobs", conf_jobs, "Parallel workers");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      if (sim_per_count == 0 && sim_n < 1) throw std::runtime_error("--num-recordings must be >= 1");
      return cmd_simulate(sim_out, sim_n, sim_per_count, sc, sim_seed, sim_jobs);
    }
    if (train_cmd->parsed()) {
      return cmd_train(train_args.config, train_args.data, train_args.out, train_args.init,
                       TrainMode::kSchedule, train_args.seed, train_args.average_last);
    }
    if (adapt_cmd->parsed()) {
      return cmd_train(adapt_args.config, adapt_args.data, adapt_args.out, adapt_args.init,
                       TrainMode::kSchedule, adapt_args.seed, adapt_args.average_last);
    }
    if (ft_cmd->parsed()) {
      return cmd_train(ft_args.config, ft_args.data, ft_args.out, ft_args.init, TrainMode::kFineTune,
                       ft_args.seed, ft_args.average_last);
    }
    if (infer_cmd->parsed()) {
      if (inf_features.empty() == inf_data.empty()) {
        throw CLI::ValidationError("infer", "exactly one of --features / --data is required");
      }
      if (inf_no_median) inf_opts.median_window = 0;
      return cmd_infer(inf_ckpt, inf_features, inf_data, inf_out, inf_opts, inf_jobs);
    }
    if (score_cmd->parsed()) return cmd_score(score_ref, score_hyp, score_collar, score_csv, score_pr);
    if (count_cmd->parsed()) return cmd_count_params(count_config, count_arch);
    if (bench_cmd->parsed()) {
      return cmd_bench_decoder(bench_minutes, bench_dim, bench_reps, bench_csv, bench_seed,
                               bench_hidden);
    }
    if (conf_cmd->parsed()) return cmd_confusion(conf_ckpt, conf_data, conf_csv, conf_thresh, conf_jobs);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace percdia::cli
