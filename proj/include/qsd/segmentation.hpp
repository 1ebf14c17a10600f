#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qsd/divergence.hpp"
#include "qsd/frontend.hpp"
#include "qsd/silence.hpp"

namespace qsd {

enum class SegMethod { Bic, T2 };

std::string to_string(SegMethod m);
SegMethod parse_seg_method(const std::string& s);

struct SegConfig {
  int window_frames = 125;        // N_w
  double stride_fraction = 0.6;   // w_s / N_w
  double analysis_window_sec = 1.75;
  int slide_frames = 0;           // N_slid, 0 selects window_frames / 2
  int grow_frames = 0;            // N_g, 0 selects window_frames / 4
  SegMethod method = SegMethod::T2;
  BicConfig bic;
  // t² gate; negative selects the chi-square(d) quantile below.
  double t2_threshold = -1.0;
  double t2_gate_quantile = 0.95;
  T2Options t2;

  int resolved_slide() const { return slide_frames > 0 ? slide_frames : std::max(1, window_frames / 2); }
  int resolved_grow() const { return grow_frames > 0 ? grow_frames : std::max(1, window_frames / 4); }
  int analysis_frames(double hop_sec) const;
  int stride_frames() const;
  double resolved_t2_threshold(Eigen::Index d) const;
  void validate(double hop_sec) const;
};

struct ChangePoint {
  Eigen::Index frame_index = 0;
  double time_sec = 0.0;
  double divergence_value = 0.0;
  std::size_t anchor_silence = 0;
};

struct ChangePointList {
  std::vector<ChangePoint> points;
  SegConfig config_used;
};

struct ScanResult {
  Eigen::Index best_index = 0;  // split offset inside the window
  double best_value = 0.0;
  int splits_evaluated = 0;
};

// Split offsets for a window of `rows` rows: the midpoint, then outward in
// steps of `stride` while each side keeps at least `min_side` rows.
std::vector<Eigen::Index> split_offsets(Eigen::Index rows, int stride, Eigen::Index min_side);

Eigen::Index min_side_rows(SegMethod method, Eigen::Index d);

// Divergence argmax over the split offsets. The OpenMP kernel evaluates the
// splits concurrently; scan_window_serial is the reference it is tested
// against. Ties go to the split nearest the centre.
ScanResult scan_window(RowsView window, double stride_fraction, SegMethod method,
                       const BicConfig& bic = {}, const T2Options& t2 = {},
                       ComputeCounter* counter = nullptr);
ScanResult scan_window_serial(RowsView window, double stride_fraction, SegMethod method,
                              const BicConfig& bic = {}, const T2Options& t2 = {},
                              ComputeCounter* counter = nullptr);

ChangePointList segment_bic(const FeatureMatrix& features,
                            const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                            double hop_sec, ComputeCounter* counter = nullptr);
ChangePointList segment_t2(const FeatureMatrix& features,
                           const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                           double hop_sec, ComputeCounter* counter = nullptr);
// Dispatches on cfg.method.
ChangePointList segment(const FeatureMatrix& features,
                        const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                        double hop_sec, ComputeCounter* counter = nullptr);

// Frame range [begin, end) of the analysis window centred on a region.
std::pair<Eigen::Index, Eigen::Index> analysis_window(const QuasiSilenceRegion& region,
                                                      Eigen::Index num_frames, int analysis_frames);

// CSV time_sec,frame_index,divergence_value,method.
void write_change_points_csv(const ChangePointList& list, std::ostream& out);

}  // namespace qsd
