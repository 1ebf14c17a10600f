#pragma once

#include <utility>
#include <vector>

namespace qsd {

struct MatchResult {
  std::vector<double> true_points;
  std::vector<double> detected_points;
  std::vector<std::pair<double, double>> matched_pairs;  // (true, detected)
  double collar_sec = 0.5;

  std::size_t matched() const { return matched_pairs.size(); }
};

struct SegScores {
  double fdr = 0.0;
  double mdr = 0.0;
  double f_seg = 1.0;
};

struct CorpusScores {
  double purity = 0.0;
  double coverage = 0.0;
  std::size_t matched = 0;
  std::size_t detected = 0;
  std::size_t truth = 0;
};

struct IdScores {
  double far = 0.0;
  double frr = 0.0;
  double f_id = 1.0;
};

// Harmonic-mean F from two error rates: 2(1−a)(1−b) / (2 − a − b).
double f_from_rates(double a, double b);

// Walks the detected points in time order; each takes the nearest unmatched
// true point within the collar.
MatchResult match_change_points(const std::vector<double>& truth, const std::vector<double>& detected,
                                double collar_sec);

SegScores seg_scores(const MatchResult& m);

// Purity and coverage from corpus-wide sums.
CorpusScores corpus_scores(const std::vector<MatchResult>& results);

// Per-cluster identification scores. A prediction of -1 means the cluster
// was left unassigned: it counts as a rejection but not as an acceptance.
IdScores id_scores(const std::vector<int>& predictions, const std::vector<int>& truths);

}  // namespace qsd
