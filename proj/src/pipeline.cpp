#include "qsd/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "qsd/error.hpp"

namespace qsd {

void PipelineConfig::validate() const {
  mfcc.validate(16000);
  silence.validate();
  seg.validate(mfcc.hop_sec());
  cluster_bic.validate();
  if (min_segment_frames < 2) throw Error(ErrorKind::InvalidConfig, "min_segment_frames must be >= 2");
  if (!(collar_sec > 0.0)) throw Error(ErrorKind::InvalidConfig, "collar must be positive");
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["mfcc"] = {{"num_coefficients", mfcc.num_coefficients},
               {"num_mel_filters", mfcc.num_mel_filters},
               {"frame_ms", mfcc.frame_ms},
               {"hop_ms", mfcc.hop_ms},
               {"pre_emphasis", mfcc.pre_emphasis}};
  j["silence"] = {{"threshold_db", silence.threshold_db},
                  {"min_region_frames", silence.min_region_frames},
                  {"noise_percentile", silence.noise_percentile}};
  j["segmentation"] = {{"method", to_string(seg.method)},
                       {"window", seg.window_frames},
                       {"stride", seg.stride_fraction},
                       {"analysis_window_sec", seg.analysis_window_sec},
                       {"slide_frames", seg.resolved_slide()},
                       {"grow_frames", seg.resolved_grow()},
                       {"lambda", seg.bic.lambda},
                       {"t2_threshold", seg.resolved_t2_threshold(mfcc.num_coefficients)}};
  j["clustering"] = {{"lambda", cluster_bic.lambda}, {"min_segment_frames", min_segment_frames}};
  j["identification"] = {{"online_update", online_update},
                         {"tau", online.tau},
                         {"lr0", online.schedule.lr0},
                         {"lr_decay", online.schedule.decay}};
  j["collar_sec"] = collar_sec;
  return j;
}

namespace {

template <typename F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

std::vector<int> cluster_truth(const DiarizationResult& result, const GroundTruth& truth,
                               double frame_sec) {
  const auto labels = frame_labels(truth, result.num_frames, result.hop_sec, frame_sec);
  std::vector<int> out;
  for (const auto& members : result.clusters.clusters) {
    std::map<int, long> votes;
    for (auto s : members) {
      const auto& seg = result.segments[s];
      for (auto f = seg.start_frame; f < seg.end_frame; ++f) {
        const int l = labels[static_cast<std::size_t>(f)];
        if (l >= 0) ++votes[l];
      }
    }
    int best = -1;
    long best_votes = 0;
    for (const auto& [speaker, v] : votes) {
      if (v > best_votes) {
        best = speaker;
        best_votes = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

DiarizationResult run_pipeline(const AudioSignal& audio, const PipelineConfig& cfg,
                               const PipelineInputs& inputs) {
  stage("config", [&] {
    cfg.validate();
    return 0;
  });
  ComputeCounter counter;
  DiarizationResult result;
  result.file_id = audio.source_id.empty() ? "audio" : audio.source_id;
  result.hop_sec = cfg.mfcc.hop_sec();

  const FrameSequence frames = stage("frontend", [&] { return frame_signal(audio, cfg.mfcc); });
  const FeatureMatrix features = stage("frontend", [&] { return compute_mfcc(frames, cfg.mfcc); });
  result.num_frames = features.size();

  const SilenceAnalysis silence =
      stage("silence", [&] { return analyze_silence(frames, cfg.silence, cfg.mfcc); });
  result.silences = silence.regions;

  result.change_points = stage("segmentation", [&] {
    return segment(features, silence.regions, cfg.seg, result.hop_sec, &counter);
  });

  result.segments = stage("clustering", [&] {
    return make_segments(features, result.change_points, silence.silent);
  });
  if (!result.segments.empty()) {
    result.clusters = stage("clustering", [&] {
      return cluster_segments(result.segments, cfg.cluster_bic, cfg.min_segment_frames, &counter);
    });
  }

  result.labels.assign(result.clusters.size(), ClusterLabel{});
  if (inputs.model != nullptr && result.clusters.size() > 0) {
    stage("identification", [&] {
      if (inputs.model->arch.input_dim != features.dim()) {
        throw Error(ErrorKind::DimensionMismatch, "model input size differs from feature size");
      }
      ModelWeights model = *inputs.model;
      if (cfg.online_update) {
        if (inputs.bank == nullptr) throw Error(ErrorKind::EmptySet, "online update needs an embedding bank");
        AdamState opt = make_adam(model);
        result.online_log = online_update(model, opt, result.segments, result.clusters,
                                          *inputs.bank, cfg.online);
      }
      for (std::size_t c = 0; c < result.clusters.size(); ++c) {
        const RowMatrix rows = concat_rows(result.segments, result.clusters.clusters[c]);
        const Prediction p = predict_cluster(model, rows);
        result.labels[c] = {p.speaker_id, p.confidence};
      }
      if (cfg.online_update) result.updated_model = std::move(model);
      return 0;
    });
  }

  if (inputs.truth != nullptr) {
    stage("metrics", [&] {
      DiarizationMetrics m;
      std::vector<double> detected;
      for (const auto& p : result.change_points.points) detected.push_back(p.time_sec);
      m.match = match_change_points(inputs.truth->change_points_sec, detected, cfg.collar_sec);
      m.seg = seg_scores(m.match);
      m.corpus = corpus_scores({m.match});
      if (inputs.model != nullptr) {
        std::vector<int> predicted;
        for (const auto& l : result.labels) predicted.push_back(l.speaker);
        m.id = id_scores(predicted, cluster_truth(result, *inputs.truth, cfg.mfcc.frame_ms / 1000.0));
      }
      result.metrics = std::move(m);
      return 0;
    });
  }
  result.counters = counter.snapshot();
  return result;
}

nlohmann::json metrics_report(const DiarizationResult& result, const PipelineConfig& cfg) {
  nlohmann::json j;
  const auto& m = result.metrics;
  auto opt = [](bool have, double v) { return have ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j["fdr"] = opt(m.has_value(), m ? m->seg.fdr : 0.0);
  j["mdr"] = opt(m.has_value(), m ? m->seg.mdr : 0.0);
  j["f_seg"] = opt(m.has_value(), m ? m->seg.f_seg : 0.0);
  j["purity"] = opt(m.has_value(), m ? m->corpus.purity : 0.0);
  j["coverage"] = opt(m.has_value(), m ? m->corpus.coverage : 0.0);
  const bool have_id = m && m->id;
  j["far"] = opt(have_id, have_id ? m->id->far : 0.0);
  j["frr"] = opt(have_id, have_id ? m->id->frr : 0.0);
  j["f_id"] = opt(have_id, have_id ? m->id->f_id : 0.0);
  j["delta_bic_count"] = result.counters.delta_bic_count;
  j["t2_count"] = result.counters.t2_count;
  j["covariance_count"] = result.counters.covariance_count;
  j["config"] = cfg.to_json();
  j["file_id"] = result.file_id;
  j["num_change_points"] = result.change_points.points.size();
  j["num_segments"] = result.segments.size();
  j["num_clusters"] = result.clusters.size();
  j["identifier_invocations"] = result.clusters.size();
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : result.change_points.points) points.push_back(p.time_sec);
  j["change_points_sec"] = points;
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : result.labels) labels.push_back({{"speaker", l.speaker}, {"confidence", l.confidence}});
  j["cluster_labels"] = labels;
  if (!result.online_log.empty()) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& d : result.online_log) {
      log.push_back({{"cluster", d.cluster_id}, {"speaker", d.speaker}, {"similarity", d.similarity},
                     {"updated", d.updated}});
    }
    j["online_updates"] = log;
  }
  return j;
}

std::vector<RttmLine> rttm_lines(const DiarizationResult& result) {
  std::vector<RttmLine> lines;
  const auto seg_cluster = result.clusters.labels(result.segments.size());
  for (std::size_t s = 0; s < result.segments.size(); ++s) {
    const int c = seg_cluster[s];
    if (c < 0) continue;
    const auto& seg = result.segments[s];
    const int speaker = result.labels.empty() ? -1 : result.labels[static_cast<std::size_t>(c)].speaker;
    RttmLine line;
    line.file_id = result.file_id;
    line.onset = static_cast<double>(seg.start_frame) * result.hop_sec;
    line.duration = static_cast<double>(seg.end_frame - seg.start_frame) * result.hop_sec;
    line.speaker = speaker >= 0 ? "spk" + std::to_string(speaker) : "cluster" + std::to_string(c);
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_rttm(const std::vector<RttmLine>& lines, std::ostream& out) {
  char buf[64];
  for (const auto& l : lines) {
    out << "SPEAKER " << l.file_id << " 1 ";
    std::snprintf(buf, sizeof buf, "%.3f %.3f", l.onset, l.duration);
    out << buf << " <NA> <NA> " << l.speaker << " <NA> <NA>\n";
  }
}

void export_rttm(const DiarizationResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  write_rttm(rttm_lines(result), out);
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

std::vector<RttmLine> parse_rttm(std::istream& in) {
  std::vector<RttmLine> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    std::istringstream ls(text);
    std::string type, channel, na1, na2, na3, na4;
    RttmLine l;
    if (!(ls >> type >> l.file_id >> channel >> l.onset >> l.duration >> na1 >> na2 >> l.speaker >> na3 >> na4) ||
        type != "SPEAKER") {
      throw Error(ErrorKind::IoFailure, "bad RTTM line: " + text);
    }
    lines.push_back(std::move(l));
  }
  return lines;
}

}  // namespace qsd
