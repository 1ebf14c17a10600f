#pragma once

#include <atomic>
#include <cstdint>

#include "qsd/types.hpp"

namespace qsd {

enum class Estimator { Mle, Unbiased };

// Gaussian window statistics. ΔBIC uses the MLE (divide-by-n) covariance so
// the closed form equals the likelihood difference exactly; Hotelling's t²
// uses the unbiased estimator.
struct GaussianStats {
  Vector mean;
  Matrix covariance;
  double log_det = 0.0;
  Eigen::Index n = 0;
  Estimator estimator = Estimator::Mle;
  bool regularized = false;
};

struct BicConfig {
  double lambda = 1.0;
  int delta_k = 0;  // 0 selects d + d(d+1)/2
  double regularization_eps = 1e-6;

  int resolved_delta_k(Eigen::Index d) const {
    return delta_k > 0 ? delta_k : static_cast<int>(d + d * (d + 1) / 2);
  }
  void validate() const;
};

struct CounterSnapshot {
  std::int64_t covariance_count = 0;
  std::int64_t delta_bic_count = 0;
  std::int64_t t2_count = 0;

  friend bool operator==(const CounterSnapshot&, const CounterSnapshot&) = default;
  CounterSnapshot operator-(const CounterSnapshot& o) const {
    return {covariance_count - o.covariance_count, delta_bic_count - o.delta_bic_count,
            t2_count - o.t2_count};
  }
};

// Counts covariance estimates and divergence evaluations. Safe to share
// between threads.
class ComputeCounter {
 public:
  void add_covariance(std::int64_t n = 1) { covariance_.fetch_add(n, std::memory_order_relaxed); }
  void add_delta_bic() { delta_bic_.fetch_add(1, std::memory_order_relaxed); }
  void add_t2() { t2_.fetch_add(1, std::memory_order_relaxed); }

  CounterSnapshot snapshot() const {
    return {covariance_.load(std::memory_order_relaxed), delta_bic_.load(std::memory_order_relaxed),
            t2_.load(std::memory_order_relaxed)};
  }
  void reset() {
    covariance_ = 0;
    delta_bic_ = 0;
    t2_ = 0;
  }

 private:
  std::atomic<std::int64_t> covariance_{0};
  std::atomic<std::int64_t> delta_bic_{0};
  std::atomic<std::int64_t> t2_{0};
};

GaussianStats gaussian_fit(RowsView window, Estimator estimator, double regularization_eps = 1e-6,
                           ComputeCounter* counter = nullptr);

// (N_s/2)ln|Σ_s| − (N_x/2)ln|Σ_x| − (N_y/2)ln|Σ_y| − (λ/2)·ΔK·ln N_s, with
// S the concatenation of X and Y. Positive values indicate a change.
double delta_bic(RowsView x, RowsView y, const BicConfig& cfg, ComputeCounter* counter = nullptr);

// Same quantity for a window split at row `split` (left = [0, split)).
double delta_bic_split(RowsView window, Eigen::Index split, const BicConfig& cfg,
                       ComputeCounter* counter = nullptr);

struct T2Options {
  bool regularize = true;
  double regularization_eps = 1e-6;
};

// T² = (N_x·N_y/N_s)·δᵀ Σ⁻¹ δ with Σ the unbiased covariance of S = X ∪ Y.
double hotelling_t2(RowsView x, RowsView y, const T2Options& opt = {},
                    ComputeCounter* counter = nullptr);
double hotelling_t2_split(RowsView window, Eigen::Index split, const T2Options& opt = {},
                          ComputeCounter* counter = nullptr);

}  // namespace qsd
