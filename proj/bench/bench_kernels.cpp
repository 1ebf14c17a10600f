// Times each OpenMP kernel against its serial reference and checks they agree.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "qsd/clustering.hpp"
#include "qsd/federated.hpp"
#include "qsd/identifier.hpp"
#include "qsd/random.hpp"
#include "qsd/segmentation.hpp"

using namespace qsd;

namespace {

RowMatrix gaussian(Rng& rng, Eigen::Index n, Eigen::Index d, double shift = 0.0) {
  RowMatrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal() + shift;
  return x;
}

// Best of `reps` runs, in milliseconds.
double time_ms(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial, double parallel, bool agree) {
  std::printf("%-28s %10.2f %10.2f %8.2fx  %s\n", name.c_str(), serial, parallel, serial / parallel,
              agree ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::stoi(argv[1]) : 5;
  Rng rng(1);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  {
    const RowMatrix w = gaussian(rng, 150, 12);
    ScanResult s, p;
    const double ts = time_ms([&] { s = scan_window_serial(w, 0.05, SegMethod::Bic); }, reps);
    const double tp = time_ms([&] { p = scan_window(w, 0.05, SegMethod::Bic); }, reps);
    row("scan_window bic (150x12)", ts, tp, s.best_index == p.best_index && s.best_value == p.best_value);
  }
  {
    std::vector<RowMatrix> clusters;
    for (int k = 0; k < 40; ++k) clusters.push_back(gaussian(rng, 120, 12, k % 4));
    Matrix s, p;
    const double ts = time_ms([&] { s = cluster_cost_matrix_serial(clusters, BicConfig{}); }, reps);
    const double tp = time_ms([&] { p = cluster_cost_matrix(clusters, BicConfig{}); }, reps);
    row("cluster_cost_matrix (40)", ts, tp, s == p);
  }
  {
    const ModelWeights m = init_model(ModelArch{12, {64, 64}, 12}, 2);
    const RowMatrix x = gaussian(rng, 20000, 12);
    RowMatrix s, p;
    const double ts = time_ms([&] { s = forward_batch_serial(m, x); }, reps);
    const double tp = time_ms([&] { p = forward_batch(m, x); }, reps);
    row("forward_batch (20000 rows)", ts, tp, s == p);
  }
  {
    std::vector<LabeledFrames> spk;
    for (int k = 0; k < 8; ++k) {
      LabeledFrames f;
      f.x = gaussian(rng, 800, 12, 0.5 * k);
      f.y.assign(800, k);
      spk.push_back(std::move(f));
    }
    const LabeledFrames held = concat(spk);
    FederatedConfig cfg;
    cfg.num_clients = 8;
    cfg.lr0 = 0.05;
    const FederatedNetworkState start = make_network(partition_non_iid(spk, 8), init_model(ModelArch{12, {64, 64}, 8}, 3));
    FederatedNetworkState s = start, p = start;
    const double ts = time_ms([&] { s = start; run_round_serial(s, cfg, held); }, reps);
    const double tp = time_ms([&] { p = start; run_round(p, cfg, held); }, reps);
    const Vector a = s.clients[0].weights().flatten(), b = p.clients[0].weights().flatten();
    row("federated round (8 clients)", ts, tp,
        std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
  return 0;
}
