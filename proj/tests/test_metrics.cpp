#include <doctest.h>

#include <algorithm>

#include "qsd/error.hpp"
#include "qsd/metrics.hpp"
#include "qsd/random.hpp"

using namespace qsd;

TEST_CASE("f_from_rates: identities") {
  CHECK(f_from_rates(0.0, 0.0) == 1.0);
  CHECK(f_from_rates(0.2, 0.1) == doctest::Approx(0.847059).epsilon(1e-6));
  CHECK(std::abs(f_from_rates(0.2, 0.1) - 2.0 * 0.8 * 0.9 / 1.7) < 1e-15);
  CHECK(f_from_rates(1.0, 1.0) == 0.0);
  CHECK(f_from_rates(1.0, 0.0) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    const double f = f_from_rates(a, b);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(f == doctest::Approx(f_from_rates(b, a)).epsilon(1e-15));
    CHECK(f < 1.0);
  }
}

TEST_CASE("match_change_points: hand cases") {
  const std::vector<double> truth{10, 20, 30};
  const MatchResult same = match_change_points(truth, truth, 0.5);
  CHECK(same.matched() == 3);

  const MatchResult m = match_change_points(truth, {10.1, 25}, 0.5);
  REQUIRE(m.matched() == 1);
  CHECK(m.matched_pairs[0] == std::pair<double, double>{10, 10.1});
  const SegScores s = seg_scores(m);
  CHECK(s.fdr == 0.5);
  CHECK(s.mdr == doctest::Approx(2.0 / 3.0));
  CHECK(s.f_seg == doctest::Approx(0.4).epsilon(1e-12));

  CHECK(match_change_points(truth, {}, 0.5).matched() == 0);
  try {
    match_change_points({3, 1}, {}, 0.5);
    FAIL("expected UnsortedInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsortedInput);
  }
  CHECK_THROWS_AS(match_change_points({}, {2, 1}, 0.5), Error);
}

TEST_CASE("match_change_points: nearest unmatched, one-to-one") {
  // 1.1 takes 1.2 (nearest); 1.3 then falls back to 0.9, the only one left
  const MatchResult m = match_change_points({0.9, 1.2}, {1.1, 1.3}, 0.5);
  REQUIRE(m.matched() == 2);
  CHECK(m.matched_pairs[0] == std::pair<double, double>{1.2, 1.1});
  CHECK(m.matched_pairs[1] == std::pair<double, double>{0.9, 1.3});
  const MatchResult n = match_change_points({5.0}, {4.8, 5.1}, 0.5);
  CHECK(n.matched() == 1);
  for (const auto& [t, d] : match_change_points({1, 2, 3}, {1.4, 2.6, 2.9}, 0.5).matched_pairs) {
    CHECK(std::abs(t - d) <= 0.5);
  }
}

TEST_CASE("seg_scores: conventions") {
  const SegScores perfect = seg_scores(match_change_points({1, 2}, {1, 2}, 0.5));
  CHECK(perfect.fdr == 0.0);
  CHECK(perfect.mdr == 0.0);
  CHECK(perfect.f_seg == 1.0);
  const SegScores nothing = seg_scores(match_change_points({1, 2}, {}, 0.5));
  CHECK(nothing.fdr == 0.0);
  CHECK(nothing.mdr == 1.0);
  const SegScores no_truth = seg_scores(match_change_points({}, {1.0}, 0.5));
  CHECK(no_truth.mdr == 0.0);
  CHECK(no_truth.fdr == 1.0);
}

TEST_CASE("matching is monotone in the collar") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> t, d;
    for (int i = 0; i < 10; ++i) t.push_back(rng.uniform(0.0, 30.0));
    for (int i = 0; i < 12; ++i) d.push_back(rng.uniform(0.0, 30.0));
    std::sort(t.begin(), t.end());
    std::sort(d.begin(), d.end());
    std::size_t prev = 0;
    for (double collar : {0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 40.0}) {
      const auto m = match_change_points(t, d, collar);
      CHECK(m.matched() >= prev);
      prev = m.matched();
      const SegScores s = seg_scores(m);
      CHECK((s.fdr >= 0.0 && s.fdr <= 1.0 && s.mdr >= 0.0 && s.mdr <= 1.0));
    }
    CHECK(prev == 10);
  }
}

TEST_CASE("corpus_scores: sums across conversations") {
  MatchResult a, b;
  a.true_points = {1, 2, 3};
  a.detected_points = {1, 5};
  a.matched_pairs = {{1, 1}};
  b.true_points = {1, 2};
  b.detected_points = {1, 2};
  b.matched_pairs = {{1, 1}, {2, 2}};
  const CorpusScores c = corpus_scores({a, b});
  CHECK(c.purity == 0.75);
  CHECK(c.coverage == 0.6);
  CHECK(c.matched == 3);
  const CorpusScores p = corpus_scores({match_change_points({1, 2}, {1, 2}, 0.5)});
  CHECK(p.purity == 1.0);
  CHECK(p.coverage == 1.0);
  try {
    corpus_scores({});
    FAIL("expected EmptyCorpus");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyCorpus);
  }
}

TEST_CASE("id_scores") {
  IdScores s = id_scores({0, 1, 2}, {0, 1, 2});
  CHECK(s.far == 0.0);
  CHECK(s.frr == 0.0);
  CHECK(s.f_id == 1.0);
  s = id_scores({1, 2, 0}, {0, 1, 2});
  CHECK(s.far == 1.0);
  CHECK(s.frr == 1.0);
  CHECK(s.f_id == 0.0);
  // one wrong of ten assigned, one rejected: FAR 0.1, FRR 0.2
  std::vector<int> pred{0, 1, 2, 3, 4, 5, 6, 7, 8, 0, -1}, truth{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  pred.pop_back();
  truth.pop_back();
  pred.back() = -1;
  pred[0] = 5;
  s = id_scores(pred, truth);
  CHECK(s.far == doctest::Approx(1.0 / 9.0));
  CHECK(s.frr == doctest::Approx(0.2));
  CHECK(f_from_rates(0.1, 0.2) == doctest::Approx(0.847059).epsilon(1e-6));
  CHECK_THROWS_AS(id_scores({0}, {0, 1}), Error);
}
