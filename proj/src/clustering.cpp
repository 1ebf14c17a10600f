#include "qsd/clustering.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>

#include "qsd/error.hpp"

namespace qsd {

std::vector<int> ClusterSet::labels(std::size_t num_segments) const {
  std::vector<int> out(num_segments, -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (auto s : clusters[c]) out[s] = static_cast<int>(c);
  }
  return out;
}

std::vector<Segment> make_segments(const FeatureMatrix& features, const ChangePointList& points,
                                   const std::vector<bool>& silent) {
  const Eigen::Index n = features.size();
  if (!silent.empty() && static_cast<Eigen::Index>(silent.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, "silence mask length differs from frame count");
  }
  std::vector<Eigen::Index> bounds{0};
  for (const auto& p : points.points) {
    if (p.frame_index > bounds.back() && p.frame_index < n) bounds.push_back(p.frame_index);
  }
  bounds.push_back(n);

  std::vector<Segment> segments;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index f = bounds[k]; f < bounds[k + 1]; ++f) {
      if (silent.empty() || !silent[static_cast<std::size_t>(f)]) keep.push_back(f);
    }
    if (keep.empty()) continue;
    Segment s;
    s.start_frame = keep.front();
    s.end_frame = keep.back() + 1;
    s.rows.resize(static_cast<Eigen::Index>(keep.size()), features.dim());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      s.rows.row(static_cast<Eigen::Index>(i)) = features.rows.row(keep[i]);
    }
    segments.push_back(std::move(s));
  }
  return segments;
}

RowMatrix concat_rows(const std::vector<Segment>& segments, const std::vector<std::size_t>& members) {
  Eigen::Index total = 0;
  for (auto m : members) total += segments[m].rows.rows();
  const Eigen::Index d = members.empty() ? 0 : segments[members.front()].rows.cols();
  RowMatrix out(total, d);
  Eigen::Index at = 0;
  for (auto m : members) {
    out.middleRows(at, segments[m].rows.rows()) = segments[m].rows;
    at += segments[m].rows.rows();
  }
  return out;
}

double merge_cost(RowsView a, RowsView b, const BicConfig& cfg, ComputeCounter* counter) {
  return delta_bic(a, b, cfg, counter);
}

Matrix cluster_cost_matrix_serial(const std::vector<RowMatrix>& clusters, const BicConfig& cfg,
                                  ComputeCounter* counter) {
  const auto k = static_cast<Eigen::Index>(clusters.size());
  Matrix cost = Matrix::Constant(k, k, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) cost(i, j) = merge_cost(clusters[i], clusters[j], cfg, counter);
  }
  return cost;
}

Matrix cluster_cost_matrix(const std::vector<RowMatrix>& clusters, const BicConfig& cfg,
                           ComputeCounter* counter) {
  const auto k = static_cast<Eigen::Index>(clusters.size());
  Matrix cost = Matrix::Constant(k, k, std::numeric_limits<double>::infinity());
  const Eigen::Index pairs = k * (k - 1) / 2;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index p = 0; p < pairs; ++p) {
    // unrank p into (i, j), i < j
    Eigen::Index i = 0, rem = p;
    while (rem >= k - 1 - i) {
      rem -= k - 1 - i;
      ++i;
    }
    const Eigen::Index j = i + 1 + rem;
    cost(i, j) = merge_cost(clusters[i], clusters[j], cfg, counter);
  }
  return cost;
}

ClusterSet cluster_segments(const std::vector<Segment>& segments, const BicConfig& cfg,
                            int min_segment_frames, ComputeCounter* counter) {
  if (segments.empty()) throw Error(ErrorKind::NoSegments, "nothing to cluster");
  cfg.validate();
  ClusterSet out;
  std::vector<std::vector<std::size_t>> members;
  std::vector<RowMatrix> rows;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto n = segments[s].rows.rows();
    if (n < std::max<Eigen::Index>(min_segment_frames, 2)) {
      out.noise.push_back(s);
      continue;
    }
    members.push_back({s});
    rows.push_back(segments[s].rows);
  }

  Matrix cost = cluster_cost_matrix(rows, cfg, counter);
  while (members.size() > 1) {
    const auto k = static_cast<Eigen::Index>(members.size());
    Eigen::Index best_i = -1, best_j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) {
        if (cost(i, j) < best) {
          best = cost(i, j);
          best_i = i;
          best_j = j;
        }
      }
    }
    if (!(best < 0.0)) break;
    out.merge_trace.push_back({members[best_i].front(), members[best_j].front(), best});

    auto& into = members[best_i];
    into.insert(into.end(), members[best_j].begin(), members[best_j].end());
    std::sort(into.begin(), into.end());
    rows[best_i] = concat_rows(segments, into);
    members.erase(members.begin() + best_j);
    rows.erase(rows.begin() + best_j);

    // drop row/column best_j, then refresh the merged cluster's costs
    Matrix next(k - 1, k - 1);
    for (Eigen::Index i = 0, ni = 0; i < k; ++i) {
      if (i == best_j) continue;
      for (Eigen::Index j = 0, nj = 0; j < k; ++j) {
        if (j == best_j) continue;
        next(ni, nj++) = cost(i, j);
      }
      ++ni;
    }
    cost = std::move(next);
    const auto m = static_cast<Eigen::Index>(members.size());
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index o = 0; o < m; ++o) {
      if (o == best_i) continue;
      const double c = merge_cost(rows[std::min(o, best_i)], rows[std::max(o, best_i)], cfg, counter);
      cost(std::min(o, best_i), std::max(o, best_i)) = c;
    }
  }
  out.clusters = std::move(members);
  return out;
}

void write_clusters_csv(const std::vector<Segment>& segments, const ClusterSet& clusters,
                        double hop_sec, std::ostream& out) {
  const auto labels = clusters.labels(segments.size());
  out << "segment_start_sec,segment_end_sec,cluster_id\n" << std::fixed << std::setprecision(3);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    out << segments[s].start_frame * hop_sec << ',' << segments[s].end_frame * hop_sec << ','
        << labels[s] << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace qsd
