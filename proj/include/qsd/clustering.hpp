#pragma once

#include <ostream>
#include <vector>

#include "qsd/divergence.hpp"
#include "qsd/frontend.hpp"
#include "qsd/segmentation.hpp"

namespace qsd {

// A speech stretch between two change points. `rows` holds its non-silent
// feature rows in frame order.
struct Segment {
  Eigen::Index start_frame = 0;
  Eigen::Index end_frame = 0;  // exclusive
  RowMatrix rows;
};

struct MergeStep {
  std::size_t a = 0;  // representative (lowest) segment index of each cluster
  std::size_t b = 0;
  double cost = 0.0;
};

struct ClusterSet {
  std::vector<std::vector<std::size_t>> clusters;  // segment indices, ascending
  std::vector<MergeStep> merge_trace;
  std::vector<std::size_t> noise;  // segments too short to cluster

  std::size_t size() const { return clusters.size(); }
  // Cluster id per segment, -1 for noise.
  std::vector<int> labels(std::size_t num_segments) const;
};

// Cuts the frame range at each change point and keeps the non-silent frames
// of every piece. Pieces without speech are dropped.
std::vector<Segment> make_segments(const FeatureMatrix& features, const ChangePointList& points,
                                   const std::vector<bool>& silent);

RowMatrix concat_rows(const std::vector<Segment>& segments, const std::vector<std::size_t>& members);

// ΔBIC between two clusters' pooled rows. Lower means more similar.
double merge_cost(RowsView a, RowsView b, const BicConfig& cfg, ComputeCounter* counter = nullptr);

// Upper-triangular ΔBIC matrix between clusters; the diagonal and lower
// triangle are left at +inf.
Matrix cluster_cost_matrix(const std::vector<RowMatrix>& clusters, const BicConfig& cfg,
                           ComputeCounter* counter = nullptr);
Matrix cluster_cost_matrix_serial(const std::vector<RowMatrix>& clusters, const BicConfig& cfg,
                                  ComputeCounter* counter = nullptr);

// Greedy agglomeration: merge the cheapest pair while its cost is negative.
ClusterSet cluster_segments(const std::vector<Segment>& segments, const BicConfig& cfg,
                            int min_segment_frames = 25, ComputeCounter* counter = nullptr);

// CSV segment_start_sec,segment_end_sec,cluster_id (noise rows get -1).
void write_clusters_csv(const std::vector<Segment>& segments, const ClusterSet& clusters,
                        double hop_sec, std::ostream& out);

}  // namespace qsd
