#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsd/clustering.hpp"
#include "qsd/identifier.hpp"
#include "qsd/metrics.hpp"
#include "qsd/segmentation.hpp"
#include "qsd/silence.hpp"
#include "qsd/synth.hpp"

namespace qsd {

struct PipelineConfig {
  MfccConfig mfcc;
  SilenceConfig silence;
  SegConfig seg;
  BicConfig cluster_bic;
  int min_segment_frames = 25;
  double collar_sec = 0.5;
  bool online_update = false;
  OnlineUpdateConfig online;
  std::size_t bank_cap = 200;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ClusterLabel {
  int speaker = -1;  // -1 when no model was supplied
  double confidence = 0.0;
};

struct DiarizationMetrics {
  MatchResult match;
  SegScores seg;
  CorpusScores corpus;
  std::optional<IdScores> id;
};

struct DiarizationResult {
  std::string file_id;
  double hop_sec = 0.01;
  Eigen::Index num_frames = 0;
  std::vector<QuasiSilenceRegion> silences;
  ChangePointList change_points;
  std::vector<Segment> segments;
  ClusterSet clusters;
  std::vector<ClusterLabel> labels;  // one per cluster
  std::vector<OnlineDecision> online_log;
  CounterSnapshot counters;
  std::optional<DiarizationMetrics> metrics;
  std::optional<ModelWeights> updated_model;
};

struct PipelineInputs {
  const ModelWeights* model = nullptr;
  const GroundTruth* truth = nullptr;
  EmbeddingBank* bank = nullptr;  // required for online updates
};

// frontend → silence → segmentation → clustering → identification
// (→ online update) → metrics. Failures are rethrown as StageError.
DiarizationResult run_pipeline(const AudioSignal& audio, const PipelineConfig& cfg,
                               const PipelineInputs& inputs = {});

// Majority ground-truth speaker of each cluster's frames.
std::vector<int> cluster_truth(const DiarizationResult& result, const GroundTruth& truth,
                               double frame_sec);

nlohmann::json metrics_report(const DiarizationResult& result, const PipelineConfig& cfg);

struct RttmLine {
  std::string file_id;
  double onset = 0.0;
  double duration = 0.0;
  std::string speaker;
};

// One SPEAKER line per labelled segment (noise segments are skipped).
std::vector<RttmLine> rttm_lines(const DiarizationResult& result);
void write_rttm(const std::vector<RttmLine>& lines, std::ostream& out);
void export_rttm(const DiarizationResult& result, const std::filesystem::path& path);
std::vector<RttmLine> parse_rttm(std::istream& in);

}  // namespace qsd
