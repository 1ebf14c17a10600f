#include "qsd/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "qsd/error.hpp"

namespace qsd {

std::string to_string(SegMethod m) { return m == SegMethod::Bic ? "bic" : "t2"; }

SegMethod parse_seg_method(const std::string& s) {
  if (s == "bic") return SegMethod::Bic;
  if (s == "t2") return SegMethod::T2;
  throw Error(ErrorKind::InvalidConfig, "unknown segmentation method '" + s + "'");
}

int SegConfig::analysis_frames(double hop_sec) const {
  return static_cast<int>(std::lround(analysis_window_sec / hop_sec));
}

int SegConfig::stride_frames() const {
  return std::max(1, static_cast<int>(std::lround(stride_fraction * window_frames)));
}

double SegConfig::resolved_t2_threshold(Eigen::Index d) const {
  if (t2_threshold >= 0.0) return t2_threshold;
  const boost::math::chi_squared_distribution<double> chi2(static_cast<double>(d));
  return boost::math::quantile(chi2, t2_gate_quantile);
}

void SegConfig::validate(double hop_sec) const {
  if (window_frames < 4) throw Error(ErrorKind::InvalidConfig, "window_frames must be >= 4");
  if (!(stride_fraction > 0.0 && stride_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "stride_fraction must lie in (0, 1]");
  }
  if (window_frames > analysis_frames(hop_sec)) {
    throw Error(ErrorKind::InvalidConfig, "window_frames exceeds the analysis window (" +
                                              std::to_string(analysis_frames(hop_sec)) + " frames)");
  }
  if (slide_frames < 0 || grow_frames < 0) {
    throw Error(ErrorKind::InvalidConfig, "slide/grow frames must be positive");
  }
  if (!(t2_gate_quantile > 0.0 && t2_gate_quantile < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "t2_gate_quantile must lie in (0, 1)");
  }
  bic.validate();
}

std::vector<Eigen::Index> split_offsets(Eigen::Index rows, int stride, Eigen::Index min_side) {
  std::vector<Eigen::Index> out;
  const Eigen::Index mid = rows / 2;
  auto valid = [&](Eigen::Index s) { return s >= min_side && rows - s >= min_side; };
  if (!valid(mid)) return out;
  out.push_back(mid);
  for (Eigen::Index k = stride;; k += stride) {
    const bool left = valid(mid - k), right = valid(mid + k);
    if (!left && !right) break;
    if (left) out.push_back(mid - k);
    if (right) out.push_back(mid + k);
  }
  return out;
}

Eigen::Index min_side_rows(SegMethod method, Eigen::Index d) {
  return method == SegMethod::T2 ? d + 2 : 2;
}

namespace {

double split_value(RowsView window, Eigen::Index split, SegMethod method, const BicConfig& bic,
                   const T2Options& t2, ComputeCounter* counter) {
  return method == SegMethod::Bic ? delta_bic_split(window, split, bic, counter)
                                  : hotelling_t2_split(window, split, t2, counter);
}

std::vector<Eigen::Index> checked_splits(RowsView window, double stride_fraction, SegMethod method) {
  const int stride = std::max(
      1, static_cast<int>(std::lround(stride_fraction * static_cast<double>(window.rows()))));
  auto splits = split_offsets(window.rows(), stride, min_side_rows(method, window.cols()));
  if (splits.empty()) {
    throw Error(ErrorKind::WindowTooSmall,
                "window of " + std::to_string(window.rows()) + " rows is too small to split");
  }
  return splits;
}

// Splits are ordered centre-out, so a strict comparison keeps the most
// central split on ties.
ScanResult reduce(const std::vector<Eigen::Index>& splits, const std::vector<double>& values) {
  ScanResult r;
  r.best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (values[i] > r.best_value) {
      r.best_value = values[i];
      r.best_index = splits[i];
    }
  }
  r.splits_evaluated = static_cast<int>(splits.size());
  return r;
}

}  // namespace

ScanResult scan_window_serial(RowsView window, double stride_fraction, SegMethod method,
                              const BicConfig& bic, const T2Options& t2, ComputeCounter* counter) {
  const auto splits = checked_splits(window, stride_fraction, method);
  std::vector<double> values(splits.size());
  for (std::size_t i = 0; i < splits.size(); ++i) {
    values[i] = split_value(window, splits[i], method, bic, t2, counter);
  }
  return reduce(splits, values);
}

ScanResult scan_window(RowsView window, double stride_fraction, SegMethod method,
                       const BicConfig& bic, const T2Options& t2, ComputeCounter* counter) {
  const auto splits = checked_splits(window, stride_fraction, method);
  std::vector<double> values(splits.size());
  const auto count = static_cast<long>(splits.size());
#pragma omp parallel for schedule(dynamic) if (count > 1)
  for (long i = 0; i < count; ++i) {
    values[i] = split_value(window, splits[i], method, bic, t2, counter);
  }
  return reduce(splits, values);
}

std::pair<Eigen::Index, Eigen::Index> analysis_window(const QuasiSilenceRegion& region,
                                                      Eigen::Index num_frames, int analysis_frames) {
  const Eigen::Index len = std::min<Eigen::Index>(analysis_frames, num_frames);
  Eigen::Index begin = region.midpoint() - len / 2;
  begin = std::clamp<Eigen::Index>(begin, 0, num_frames - len);
  return {begin, begin + len};
}

namespace {

// Slide/grow search inside one analysis window.
std::vector<ChangePoint> search_analysis_window(const FeatureMatrix& features,
                                                const QuasiSilenceRegion& region,
                                                std::size_t anchor, const SegConfig& cfg,
                                                int aw_frames, double t2_threshold,
                                                ComputeCounter* counter) {
  std::vector<ChangePoint> found;
  const auto [ab, ae] = analysis_window(region, features.size(), aw_frames);
  const Eigen::Index aw_len = ae - ab;
  const Eigen::Index min_side = min_side_rows(cfg.method, features.dim());
  Eigen::Index size = std::min<Eigen::Index>(cfg.window_frames, aw_len);
  Eigen::Index start = ab;
  if (size < 2 * min_side) return found;

  auto record = [&](Eigen::Index split, double value) {
    const Eigen::Index frame = start + split;
    found.push_back({frame, features.frame_times_sec[static_cast<std::size_t>(frame)], value, anchor});
  };

  while (start + size <= ae) {
    const RowsView window = features.slice(start, start + size);
    bool slide = false;
    if (cfg.method == SegMethod::Bic) {
      // Scans here run serially: analysis windows are already spread over threads.
      const ScanResult r = scan_window_serial(window, cfg.stride_fraction, SegMethod::Bic, cfg.bic,
                                              cfg.t2, counter);
      if (r.best_value > 0.0) {
        record(r.best_index, r.best_value);
        slide = true;
      }
    } else {
      const ScanResult r = scan_window_serial(window, cfg.stride_fraction, SegMethod::T2, cfg.bic,
                                              cfg.t2, counter);
      if (r.best_value > t2_threshold) {
        const double confirm = delta_bic_split(window, r.best_index, cfg.bic, counter);
        if (confirm > 0.0) record(r.best_index, confirm);
        // Slides after a t² detection whether or not ΔBIC confirms it.
        slide = true;
      }
    }
    if (slide) {
      start += cfg.resolved_slide();
    } else {
      const Eigen::Index grown = std::min<Eigen::Index>(size + cfg.resolved_grow(), ae - start);
      if (grown <= size) break;
      size = grown;
    }
  }
  return found;
}

// Sorts and merges points closer than `min_gap` frames, keeping the larger
// divergence value.
std::vector<ChangePoint> merge_close(std::vector<ChangePoint> points, Eigen::Index min_gap) {
  std::stable_sort(points.begin(), points.end(), [](const ChangePoint& a, const ChangePoint& b) {
    return a.frame_index < b.frame_index;
  });
  std::vector<ChangePoint> out;
  for (const auto& p : points) {
    if (!out.empty() && p.frame_index - out.back().frame_index < min_gap) {
      if (p.divergence_value > out.back().divergence_value) out.back() = p;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

ChangePointList run_segmentation(const FeatureMatrix& features,
                                 const std::vector<QuasiSilenceRegion>& silences,
                                 const SegConfig& cfg, double hop_sec, ComputeCounter* counter) {
  cfg.validate(hop_sec);
  ChangePointList result;
  result.config_used = cfg;
  if (silences.empty() || features.size() == 0) return result;
  const int aw_frames = cfg.analysis_frames(hop_sec);
  const double t2_threshold = cfg.resolved_t2_threshold(features.dim());

  std::vector<std::vector<ChangePoint>> per_silence(silences.size());
  const auto count = static_cast<long>(silences.size());
#pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < count; ++j) {
    per_silence[j] = search_analysis_window(features, silences[j], static_cast<std::size_t>(j), cfg,
                                            aw_frames, t2_threshold, counter);
  }
  std::vector<ChangePoint> all;
  for (auto& v : per_silence) all.insert(all.end(), v.begin(), v.end());
  result.points = merge_close(std::move(all), cfg.resolved_slide());
  return result;
}

}  // namespace

ChangePointList segment_bic(const FeatureMatrix& features,
                            const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                            double hop_sec, ComputeCounter* counter) {
  SegConfig c = cfg;
  c.method = SegMethod::Bic;
  return run_segmentation(features, silences, c, hop_sec, counter);
}

ChangePointList segment_t2(const FeatureMatrix& features,
                           const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                           double hop_sec, ComputeCounter* counter) {
  SegConfig c = cfg;
  c.method = SegMethod::T2;
  return run_segmentation(features, silences, c, hop_sec, counter);
}

ChangePointList segment(const FeatureMatrix& features,
                        const std::vector<QuasiSilenceRegion>& silences, const SegConfig& cfg,
                        double hop_sec, ComputeCounter* counter) {
  return cfg.method == SegMethod::Bic ? segment_bic(features, silences, cfg, hop_sec, counter)
                                      : segment_t2(features, silences, cfg, hop_sec, counter);
}

void write_change_points_csv(const ChangePointList& list, std::ostream& out) {
  out << "time_sec,frame_index,divergence_value,method\n";
  for (const auto& p : list.points) {
    out << std::fixed << std::setprecision(3) << p.time_sec << ',' << p.frame_index << ','
        << std::setprecision(6) << p.divergence_value << ',' << to_string(list.config_used.method)
        << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace qsd
