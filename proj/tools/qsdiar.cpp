// qsdiar: command-line front end for the diarization toolkit.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsd/error.hpp"
#include "qsd/experiments.hpp"
#include "qsd/pipeline.hpp"
#include "qsd/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qsd;

namespace {

// Failures outside run_pipeline are attributed to the stage that raised them.
template <typename F>
auto in_stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Common {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::uint64_t bank_seed = 0;
  int bank_size = 8;
  double seconds_per_speaker = 12.0;
  std::string method = "t2";
  int window = 125;
  double stride = 0.6;
  double lambda = 1.0;
  int min_seg_frames = 25;
  double collar = 0.5;
  double silence_db = 60.0;
};

PipelineConfig pipeline_config(const Common& c) {
  PipelineConfig cfg;
  cfg.seg.method = parse_seg_method(c.method);
  cfg.seg.window_frames = c.window;
  cfg.seg.stride_fraction = c.stride;
  cfg.seg.bic.lambda = c.lambda;
  cfg.cluster_bic.lambda = c.lambda;
  cfg.min_segment_frames = c.min_seg_frames;
  cfg.collar_sec = c.collar;
  cfg.silence.threshold_db = c.silence_db;
  return cfg;
}

fs::path output_path(const Common& c, const std::string& name) {
  const fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  return dir / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  return out;
}

std::string stem_of(const std::string& input) { return fs::path(input).stem().string(); }

json truth_to_json(const GroundTruth& t) {
  auto intervals = [](const std::vector<LabeledInterval>& v) {
    json a = json::array();
    for (const auto& i : v) a.push_back({{"start_sec", i.start_sec}, {"end_sec", i.end_sec}, {"speaker", i.speaker}});
    return a;
  };
  return {{"change_points_sec", t.change_points_sec}, {"turns", intervals(t.turns)}, {"pauses", intervals(t.pauses)}};
}

GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoFailure, path + ": " + e.what());
  }
  GroundTruth t;
  t.change_points_sec = j.at("change_points_sec").get<std::vector<double>>();
  auto intervals = [](const json& a) {
    std::vector<LabeledInterval> v;
    for (const auto& i : a) v.push_back({i.at("start_sec"), i.at("end_sec"), i.at("speaker")});
    return v;
  };
  t.turns = intervals(j.at("turns"));
  if (j.contains("pauses")) t.pauses = intervals(j.at("pauses"));
  return t;
}

std::vector<double> load_change_point_times(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    times.push_back(std::stod(line.substr(0, line.find(','))));
  }
  return times;
}

std::vector<SpeakerProfile> speaker_bank(const Common& c) {
  return make_speaker_profiles(c.bank_size, c.bank_seed);
}

void write_json(const json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_diarization_outputs(const DiarizationResult& r, const PipelineConfig& cfg, const Common& c,
                               const std::string& stem) {
  {
    auto out = open_out(output_path(c, stem + ".change_points.csv"));
    write_change_points_csv(r.change_points, out);
  }
  {
    auto out = open_out(output_path(c, stem + ".clusters.csv"));
    write_clusters_csv(r.segments, r.clusters, r.hop_sec, out);
  }
  export_rttm(r, output_path(c, stem + ".rttm"));
  write_json(metrics_report(r, cfg), output_path(c, stem + ".report.json"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker diarization at quasi-silences with federated speaker identification"};
  app.set_config("--config", "", "INI config file; command-line flags override its values");
  app.fallthrough();
  app.require_subcommand(1);

  Common c;
  app.add_option("--out-dir", c.out_dir, "Output directory")->envname("QSD_OUTPUT_DIR");
  app.add_option("--seed", c.seed, "Top-level random seed");
  app.add_option("--bank-seed", c.bank_seed, "Seed of the synthetic speaker bank");
  app.add_option("--bank-size", c.bank_size, "Speakers in the synthetic bank")->check(CLI::PositiveNumber);
  app.add_option("--seconds-per-speaker", c.seconds_per_speaker, "Training speech per speaker");
  app.add_option("--method", c.method, "Segmentation divergence")->check(CLI::IsMember({"bic", "t2"}));
  app.add_option("--window", c.window, "Sliding window length in frames");
  app.add_option("--stride", c.stride, "Split stride as a fraction of the window");
  app.add_option("--lambda", c.lambda, "BIC penalty weight");
  app.add_option("--min-seg-frames", c.min_seg_frames, "Shorter segments are treated as noise");
  app.add_option("--collar", c.collar, "Change-point matching collar in seconds");
  app.add_option("--silence-db", c.silence_db, "Quasi-silence threshold below peak energy");

  std::string input, truth_path, model_path;
  auto add_input = [&](CLI::App* sub) { sub->add_option("--input", input, "PCM-16 WAV file")->required(); };

  auto* segment_cmd = app.add_subcommand("segment", "Detect speaker change points");
  add_input(segment_cmd);

  auto* cluster_cmd = app.add_subcommand("cluster", "Segment and cluster by ΔBIC");
  add_input(cluster_cmd);

  double tau = 0.5;
  bool online = false;
  auto* identify_cmd = app.add_subcommand("identify", "Label clusters with a trained identifier");
  add_input(identify_cmd);
  identify_cmd->add_option("--model", model_path, "Identifier checkpoint")->required();
  identify_cmd->add_option("--tau", tau, "Cosine-similarity gate for online updates");
  identify_cmd->add_flag("--online", online, "Update the model on accepted clusters");

  auto* diarize_cmd = app.add_subcommand("diarize", "Full pipeline with optional identification and scoring");
  add_input(diarize_cmd);
  diarize_cmd->add_option("--truth", truth_path, "Ground-truth JSON from synth");
  diarize_cmd->add_option("--model", model_path, "Identifier checkpoint");
  diarize_cmd->add_option("--tau", tau, "Cosine-similarity gate for online updates");
  diarize_cmd->add_flag("--online", online, "Update the model on accepted clusters");

  int conversations = 20;
  auto* sweep_cmd = app.add_subcommand("sweep", "Window/stride/method grid over a synthetic corpus");
  sweep_cmd->add_option("--conversations", conversations, "Synthetic conversations")->check(CLI::PositiveNumber);

  FederatedConfig fed;
  std::string fed_mode = "non_iid";
  auto* fedsim_cmd = app.add_subcommand("fedsim", "Simulate grouped federated training");
  fedsim_cmd->add_option("--mode", fed_mode, "centralized, non_iid, grouped or iid");
  fedsim_cmd->add_option("--group-size", fed.group_size, "Clients per group");
  fedsim_cmd->add_option("--rounds", fed.rounds, "Communication rounds");
  fedsim_cmd->add_option("--local-epochs", fed.local_epochs, "Local epochs per round");
  fedsim_cmd->add_option("--lr0", fed.lr0, "Initial learning rate");
  fedsim_cmd->add_option("--lr-decay", fed.lr_decay, "Per-round learning-rate decay");
  fedsim_cmd->add_option("--batch", fed.batch_size, "Mini-batch size");
  fed.lr0 = ParadigmSetup{}.lr0;
  fed.lr_decay = ParadigmSetup{}.lr_decay;
  fed.batch_size = ParadigmSetup{}.batch_size;

  std::string name = "conversation";
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic conversation with ground truth");
  synth_cmd->add_option("--name", name, "Output file stem");

  std::string detected_path;
  auto* eval_cmd = app.add_subcommand("eval", "Score detected change points against ground truth");
  eval_cmd->add_option("--truth", truth_path, "Ground-truth JSON")->required();
  eval_cmd->add_option("--change-points", detected_path, "Change-point CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = in_stage("config", [&] {
      PipelineConfig p = pipeline_config(c);
      p.online_update = online;
      p.online.tau = tau;
      p.online.seed = derive_seed(c.seed, 0x0411);
      p.validate();
      return p;
    });
    auto load_input = [&] { return in_stage("frontend", [&] { return load_wav(input); }); };

    if (*segment_cmd) {
      const AudioSignal audio = load_input();
      const FrameSequence frames = in_stage("frontend", [&] { return frame_signal(audio, cfg.mfcc); });
      const FeatureMatrix features = in_stage("frontend", [&] { return compute_mfcc(frames, cfg.mfcc); });
      const SilenceAnalysis sil = in_stage("silence", [&] { return analyze_silence(frames, cfg.silence, cfg.mfcc); });
      const ChangePointList points =
          in_stage("segmentation", [&] { return segment(features, sil.regions, cfg.seg, cfg.mfcc.hop_sec()); });
      in_stage("export", [&] {
        auto out = open_out(output_path(c, stem_of(input) + ".change_points.csv"));
        write_change_points_csv(points, out);
        return 0;
      });
      std::cout << points.points.size() << " change points\n";
    } else if (*cluster_cmd) {
      const DiarizationResult r = run_pipeline(load_input(), cfg);
      in_stage("export", [&] {
        auto out = open_out(output_path(c, stem_of(input) + ".clusters.csv"));
        write_clusters_csv(r.segments, r.clusters, r.hop_sec, out);
        return 0;
      });
      std::cout << r.clusters.size() << " clusters, " << r.clusters.noise.size() << " noise segments\n";
    } else if (*identify_cmd || *diarize_cmd) {
      const AudioSignal audio = load_input();
      std::optional<ModelWeights> model;
      if (!model_path.empty()) model = in_stage("identification", [&] { return load_checkpoint(model_path); });
      std::optional<GroundTruth> truth;
      if (!truth_path.empty()) truth = in_stage("metrics", [&] { return load_truth(truth_path); });
      EmbeddingBank bank(cfg.bank_cap);
      if (online && model) {
        in_stage("identification", [&] {
          const SpeakerCorpus corpus =
              make_speaker_corpus(speaker_bank(c), c.seconds_per_speaker, derive_seed(c.seed, 0xc0de), cfg.mfcc);
          seed_bank(bank, *model, concat(corpus.train_by_speaker));
          return 0;
        });
      }
      const DiarizationResult r =
          run_pipeline(audio, cfg, {model ? &*model : nullptr, truth ? &*truth : nullptr, &bank});
      const std::string stem = stem_of(input);
      in_stage("export", [&] {
        write_diarization_outputs(r, cfg, c, stem);
        if (r.updated_model) save_checkpoint(*r.updated_model, output_path(c, stem + ".updated.ckpt"));
        return 0;
      });
      std::cout << r.change_points.points.size() << " change points, " << r.clusters.size() << " clusters";
      if (r.metrics) std::cout << ", F_seg " << r.metrics->seg.f_seg;
      if (r.metrics && r.metrics->id) std::cout << ", F_id " << r.metrics->id->f_id;
      std::cout << '\n';
    } else if (*sweep_cmd) {
      const auto rows = in_stage("sweep", [&] {
        const auto corpus = make_conversation_corpus(conversations, c.seed);
        return sweep(prepare_corpus(corpus, cfg), SweepGrid{}, cfg);
      });
      in_stage("export", [&] {
        auto out = open_out(output_path(c, "sweep.csv"));
        write_sweep_csv(rows, out);
        return 0;
      });
      write_sweep_csv(rows, std::cout);
    } else if (*fedsim_cmd) {
      fed.seed = c.seed;
      fed.num_clients = c.bank_size;
      const FedResult r = in_stage("federated", [&] {
        fed.mode = parse_fed_mode(fed_mode);
        fed.validate();
        const SpeakerCorpus corpus =
            make_speaker_corpus(speaker_bank(c), c.seconds_per_speaker, derive_seed(c.seed, 0xc0de), MfccConfig{});
        const ModelArch arch{12, {64, 64}, c.bank_size};
        return run_federated(corpus.train_by_speaker, corpus.held_out, arch, fed);
      });
      in_stage("export", [&] {
        auto out = open_out(output_path(c, "fed_history.csv"));
        write_history_csv(r.history, out);
        save_checkpoint(r.final_model, output_path(c, "model.ckpt"));
        return 0;
      });
      if (!r.history.empty()) std::cout << "final accuracy " << r.history.back().accuracy << '\n';
    } else if (*synth_cmd) {
      const auto [audio, truth] = in_stage("synth", [&] {
        SynthSpec spec = draw_conversation(speaker_bank(c), c.seed);
        return synth_conversation(spec);
      });
      in_stage("export", [&] {
        save_wav(audio, output_path(c, name + ".wav"));
        write_json(truth_to_json(truth), output_path(c, name + ".truth.json"));
        return 0;
      });
      std::cout << audio.duration_sec() << " s, " << truth.change_points_sec.size() << " change points\n";
    } else if (*eval_cmd) {
      const json report = in_stage("metrics", [&] {
        const GroundTruth truth = load_truth(truth_path);
        const MatchResult m = match_change_points(truth.change_points_sec, load_change_point_times(detected_path), c.collar);
        const SegScores s = seg_scores(m);
        const CorpusScores p = corpus_scores({m});
        return json{{"fdr", s.fdr}, {"mdr", s.mdr}, {"f_seg", s.f_seg}, {"purity", p.purity},
                    {"coverage", p.coverage}, {"matched", m.matched()}, {"collar_sec", c.collar}};
      });
      in_stage("export", [&] {
        write_json(report, output_path(c, stem_of(detected_path) + ".eval.json"));
        return 0;
      });
      std::cout << report.dump(2) << '\n';
    }
  } catch (const StageError& e) {
    std::cerr << "qsdiar: " << e.what() << '\n';  // already prefixed with the stage
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qsdiar: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
