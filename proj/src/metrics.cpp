#include "qsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsd/error.hpp"

namespace qsd {

double f_from_rates(double a, double b) {
  const double denom = 2.0 - a - b;
  if (denom <= 0.0) return 0.0;
  return 2.0 * (1.0 - a) * (1.0 - b) / denom;
}

MatchResult match_change_points(const std::vector<double>& truth, const std::vector<double>& detected,
                                double collar_sec) {
  if (!std::is_sorted(truth.begin(), truth.end()) ||
      !std::is_sorted(detected.begin(), detected.end())) {
    throw Error(ErrorKind::UnsortedInput, "change point lists must be sorted");
  }
  MatchResult m;
  m.true_points = truth;
  m.detected_points = detected;
  m.collar_sec = collar_sec;
  std::vector<bool> used(truth.size(), false);
  for (double d : detected) {
    std::size_t best = truth.size();
    double best_dist = std::numeric_limits<double>::infinity();
    // candidates lie in [d - collar, d + collar]
    auto it = std::lower_bound(truth.begin(), truth.end(), d - collar_sec);
    for (; it != truth.end() && *it <= d + collar_sec; ++it) {
      const auto k = static_cast<std::size_t>(it - truth.begin());
      const double dist = std::abs(*it - d);
      if (!used[k] && dist <= collar_sec && dist < best_dist) {
        best = k;
        best_dist = dist;
      }
    }
    if (best < truth.size()) {
      used[best] = true;
      m.matched_pairs.emplace_back(truth[best], d);
    }
  }
  return m;
}

SegScores seg_scores(const MatchResult& m) {
  const auto hit = static_cast<double>(m.matched());
  const auto det = static_cast<double>(m.detected_points.size());
  const auto tru = static_cast<double>(m.true_points.size());
  SegScores s;
  s.fdr = det > 0 ? (det - hit) / det : 0.0;
  s.mdr = tru > 0 ? (tru - hit) / tru : 0.0;
  s.f_seg = f_from_rates(s.fdr, s.mdr);
  return s;
}

CorpusScores corpus_scores(const std::vector<MatchResult>& results) {
  if (results.empty()) throw Error(ErrorKind::EmptyCorpus, "no conversations");
  CorpusScores c;
  for (const auto& r : results) {
    c.matched += r.matched();
    c.detected += r.detected_points.size();
    c.truth += r.true_points.size();
  }
  c.purity = c.detected > 0 ? static_cast<double>(c.matched) / static_cast<double>(c.detected) : 0.0;
  c.coverage = c.truth > 0 ? static_cast<double>(c.matched) / static_cast<double>(c.truth) : 0.0;
  return c;
}

IdScores id_scores(const std::vector<int>& predictions, const std::vector<int>& truths) {
  if (predictions.size() != truths.size()) {
    throw Error(ErrorKind::LengthMismatch, "predictions and truths differ in length");
  }
  std::size_t assigned = 0, wrong = 0, correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] < 0) continue;
    ++assigned;
    if (predictions[i] == truths[i]) {
      ++correct;
    } else {
      ++wrong;
    }
  }
  IdScores s;
  s.far = assigned > 0 ? static_cast<double>(wrong) / static_cast<double>(assigned) : 0.0;
  s.frr = truths.empty() ? 0.0
                         : static_cast<double>(truths.size() - correct) / static_cast<double>(truths.size());
  s.f_id = f_from_rates(s.far, s.frr);
  return s;
}

}  // namespace qsd
