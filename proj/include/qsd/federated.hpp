#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "qsd/identifier.hpp"

namespace qsd {

enum class FedMode { NonIid, Iid, Centralized };

std::string to_string(FedMode m);
FedMode parse_fed_mode(const std::string& s);

struct FederatedConfig {
  int num_clients = 12;
  int group_size = 4;
  int rounds = 20;
  int local_epochs = 1;
  double lr0 = 1.0;
  double lr_decay = 0.9;
  FedMode mode = FedMode::NonIid;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Learning rate at a round: lr0 · lr_decay^round.
double lr_schedule(int round, const FederatedConfig& cfg);

// Client i receives every frame of speaker i (labels are speaker indices).
std::vector<LabeledFrames> partition_non_iid(const std::vector<LabeledFrames>& by_speaker,
                                             int num_clients);

// Each class is shuffled and dealt in contiguous, near-equal shares.
std::vector<LabeledFrames> partition_iid(const std::vector<LabeledFrames>& by_speaker,
                                         int num_clients, std::uint64_t seed);

struct GroupAssignment {
  int round = 0;
  std::vector<std::vector<int>> groups;
  std::vector<int> arbitrators;  // one per group
};

// Random permutation cut into floor(m / group_size) groups; the remainder goes
// one client at a time to the trailing groups, so sizes differ by at most one.
GroupAssignment form_groups(const std::vector<int>& client_ids, int group_size, int round,
                            std::uint64_t seed);

// Σ W_i·w_i with W_i = n_i / Σ n_j.
ModelWeights aggregate(const std::vector<const ModelWeights*>& models,
                       const std::vector<double>& counts);
ModelWeights aggregate(const std::vector<ModelWeights>& models, const std::vector<double>& counts);

// A simulated device. Its frames never leave the object; the simulator only
// moves weights in and out.
class ClientDevice {
 public:
  ClientDevice(int id, LabeledFrames local_data, ModelWeights model);

  int id() const { return id_; }
  Eigen::Index sample_count() const { return data_.size(); }
  const ModelWeights& weights() const { return model_; }
  void set_weights(const ModelWeights& w) { model_ = w; }
  void train(const TrainOptions& options);
  std::vector<int> local_labels() const;

 private:
  int id_;
  LabeledFrames data_;
  ModelWeights model_;
  AdamState opt_;
};

struct RoundRecord {
  int round = 0;
  FedMode mode = FedMode::NonIid;
  int group_size = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  double lr = 0.0;
};

struct FederatedNetworkState {
  std::vector<ClientDevice> clients;
  int round = 0;
  std::vector<RoundRecord> history;
  std::vector<GroupAssignment> groupings;
};

FederatedNetworkState make_network(const std::vector<LabeledFrames>& client_data,
                                   const ModelWeights& initial);

// Mean held-out accuracy/loss over the clients' current models.
Evaluation evaluate_clients(const FederatedNetworkState& state, const LabeledFrames& held_out);

// Local training on every client (concurrently), random grouping, per-group
// aggregation broadcast back to the group, then evaluation.
void run_round(FederatedNetworkState& state, const FederatedConfig& cfg,
               const LabeledFrames& held_out);
// Reference that trains clients one after another; results are identical.
void run_round_serial(FederatedNetworkState& state, const FederatedConfig& cfg,
                      const LabeledFrames& held_out);

struct FedResult {
  std::vector<RoundRecord> history;
  ModelWeights final_model;  // client 0's model (or the central model)
};

// Runs cfg.rounds rounds in the configured mode. `by_speaker[k]` holds the
// training frames of speaker k (labels must equal k).
FedResult run_federated(const std::vector<LabeledFrames>& by_speaker, const LabeledFrames& held_out,
                        const ModelArch& arch, const FederatedConfig& cfg);

void write_history_csv(const std::vector<RoundRecord>& history, std::ostream& out);

}  // namespace qsd
