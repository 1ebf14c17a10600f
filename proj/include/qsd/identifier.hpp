#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qsd/clustering.hpp"
#include "qsd/types.hpp"

namespace qsd {

struct ModelArch {
  int input_dim = 12;
  std::vector<int> hidden_sizes{64, 64};
  int num_classes = 12;  // also the embedding size L_e

  void validate() const;
  std::size_t parameter_count() const;
  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

struct DenseLayer {
  RowMatrix weight;  // out x in
  Vector bias;       // out
};

struct ModelWeights {
  ModelArch arch;
  std::vector<DenseLayer> layers;  // hidden layers (ReLU) then the linear output layer
  std::int64_t version = 0;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign_flat(const Vector& flat);
};

// Adam moments, one DenseLayer-shaped buffer per layer.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const ModelWeights& w);

struct LabeledFrames {
  RowMatrix x;
  std::vector<int> y;

  Eigen::Index size() const { return x.rows(); }
  bool empty() const { return x.rows() == 0; }
};

LabeledFrames concat(const std::vector<LabeledFrames>& parts);

struct ForwardResult {
  Vector embedding;  // pre-softmax output layer
  Vector probs;
};

ModelWeights init_model(const ModelArch& arch, std::uint64_t seed);

ForwardResult forward(const ModelWeights& w, const Eigen::Ref<const Vector>& frame);

// Pre-softmax outputs for every row. The OpenMP kernel splits rows into
// blocks; forward_batch_serial is the reference.
RowMatrix forward_batch(const ModelWeights& w, RowsView rows);
RowMatrix forward_batch_serial(const ModelWeights& w, RowsView rows);

Vector softmax(const Eigen::Ref<const Vector>& logits);

// Mean cross-entropy of one-hot labels; fills `grad` (same shapes as the
// layers) when non-null.
double loss_and_gradient(const ModelWeights& w, RowsView x, std::span<const int> y,
                         std::vector<DenseLayer>* grad);

struct TrainOptions {
  double lr = 1e-3;
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Mini-batch Adam on cross-entropy. Returns the mean training loss of each
// epoch (measured during the pass).
std::vector<double> train_local(ModelWeights& w, AdamState& opt, const LabeledFrames& data,
                                const TrainOptions& options);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};
Evaluation evaluate(const ModelWeights& w, const LabeledFrames& data);

struct Embedding {
  Vector values;
  std::string source;
};

Embedding embed_segment(const ModelWeights& w, RowsView rows, std::string source = {});

// Mean pairwise cosine similarity between two embedding sets.
double cosine_similarity(std::span<const Vector> td, std::span<const Vector> cd);

struct Prediction {
  int speaker_id = 0;
  double confidence = 0.0;
};

// Argmax of the frame-averaged softmax; ties go to the lowest id.
Prediction predict_cluster(const ModelWeights& w, RowsView rows);

class EmbeddingBank {
 public:
  explicit EmbeddingBank(std::size_t cap = 200) : cap_(cap) {}

  void add(int speaker, Vector embedding);
  const std::deque<Vector>& entries(int speaker) const;
  std::vector<Vector> as_vector(int speaker) const;
  std::size_t size(int speaker) const;
  std::size_t cap() const { return cap_; }

 private:
  std::size_t cap_;
  std::map<int, std::deque<Vector>> entries_;
};

struct LrSchedule {
  double lr0 = 1.0;
  double decay = 0.9;

  double at(int step) const;
};

struct OnlineUpdateConfig {
  double tau = 0.5;
  LrSchedule schedule{1e-3, 0.9};
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct OnlineDecision {
  std::size_t cluster_id = 0;
  int speaker = 0;
  double similarity = 0.0;
  bool updated = false;
};

// For each cluster: predict its speaker, compare the cluster's segment
// embeddings with the bank entries of that speaker, and train one epoch on
// the cluster's frames when the similarity reaches tau.
std::vector<OnlineDecision> online_update(ModelWeights& w, AdamState& opt,
                                          const std::vector<Segment>& segments,
                                          const ClusterSet& clusters, EmbeddingBank& bank,
                                          const OnlineUpdateConfig& cfg);

// Populates the bank with per-segment embeddings of labelled training data,
// chopping each speaker's frames into chunks of `chunk_frames`.
void seed_bank(EmbeddingBank& bank, const ModelWeights& w, const LabeledFrames& data,
               int chunk_frames = 100);

// Text checkpoint with hex-float values; round-trips bit-exactly.
void write_checkpoint(const ModelWeights& w, std::ostream& out);
ModelWeights read_checkpoint(std::istream& in);
void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace qsd
