#include "qsd/federated.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "qsd/error.hpp"
#include "qsd/random.hpp"

namespace qsd {

namespace {

constexpr std::uint64_t kTrainTag = 0xc11e;
constexpr std::uint64_t kGroupTag = 0x6209;
constexpr std::uint64_t kIidTag = 0x11d0;
constexpr std::uint64_t kInitTag = 0x1417;

std::uint64_t client_train_seed(std::uint64_t seed, int round, int client) {
  return derive_seed(derive_seed(seed, kTrainTag, static_cast<std::uint64_t>(round)),
                     static_cast<std::uint64_t>(client));
}

}  // namespace

std::string to_string(FedMode m) {
  switch (m) {
    case FedMode::NonIid: return "non_iid";
    case FedMode::Iid: return "iid";
    case FedMode::Centralized: return "centralized";
  }
  return "unknown";
}

FedMode parse_fed_mode(const std::string& s) {
  if (s == "non_iid" || s == "grouped") return FedMode::NonIid;
  if (s == "iid") return FedMode::Iid;
  if (s == "centralized") return FedMode::Centralized;
  throw Error(ErrorKind::InvalidConfig, "unknown federated mode '" + s + "'");
}

void FederatedConfig::validate() const {
  if (num_clients < 1) throw Error(ErrorKind::InvalidConfig, "num_clients must be >= 1");
  if (group_size < 1) throw Error(ErrorKind::BadGroupSize, "group_size must be >= 1");
  if (rounds < 0 || local_epochs < 0) throw Error(ErrorKind::InvalidConfig, "rounds/epochs must be >= 0");
  if (!(lr0 > 0.0)) throw Error(ErrorKind::InvalidConfig, "lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error(ErrorKind::InvalidConfig, "lr_decay must lie in (0, 1]");
}

double lr_schedule(int round, const FederatedConfig& cfg) {
  return LrSchedule{cfg.lr0, cfg.lr_decay}.at(std::max(round, 0));
}

std::vector<LabeledFrames> partition_non_iid(const std::vector<LabeledFrames>& by_speaker,
                                             int num_clients) {
  if (num_clients < 1) throw Error(ErrorKind::InvalidConfig, "num_clients must be >= 1");
  if (static_cast<std::size_t>(num_clients) > by_speaker.size()) {
    throw Error(ErrorKind::TooManyClients, std::to_string(num_clients) + " clients for " +
                                               std::to_string(by_speaker.size()) + " speakers");
  }
  return {by_speaker.begin(), by_speaker.begin() + num_clients};
}

std::vector<LabeledFrames> partition_iid(const std::vector<LabeledFrames>& by_speaker,
                                         int num_clients, std::uint64_t seed) {
  if (num_clients < 1) throw Error(ErrorKind::InvalidConfig, "num_clients must be >= 1");
  std::vector<std::vector<LabeledFrames>> pieces(static_cast<std::size_t>(num_clients));
  for (std::size_t k = 0; k < by_speaker.size(); ++k) {
    const auto& cls = by_speaker[k];
    const Eigen::Index n = cls.size();
    if (n < num_clients) {
      throw Error(ErrorKind::InsufficientData, "class " + std::to_string(k) + " has " +
                                                   std::to_string(n) + " frames for " +
                                                   std::to_string(num_clients) + " clients");
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, kIidTag, k));
    rng.shuffle(std::span<Eigen::Index>(order));
    for (int c = 0; c < num_clients; ++c) {
      const Eigen::Index begin = n * c / num_clients;
      const Eigen::Index end = n * (c + 1) / num_clients;
      LabeledFrames part;
      part.x.resize(end - begin, cls.x.cols());
      for (Eigen::Index i = begin; i < end; ++i) {
        part.x.row(i - begin) = cls.x.row(order[i]);
        part.y.push_back(cls.y[order[i]]);
      }
      pieces[c].push_back(std::move(part));
    }
  }
  std::vector<LabeledFrames> out;
  for (auto& p : pieces) out.push_back(concat(p));
  return out;
}

GroupAssignment form_groups(const std::vector<int>& client_ids, int group_size, int round,
                            std::uint64_t seed) {
  const auto m = static_cast<int>(client_ids.size());
  if (group_size < 1 || group_size > m) {
    throw Error(ErrorKind::BadGroupSize, "group_size " + std::to_string(group_size) + " for " +
                                             std::to_string(m) + " clients");
  }
  std::vector<int> order = client_ids;
  Rng rng(derive_seed(seed, kGroupTag, static_cast<std::uint64_t>(round)));
  rng.shuffle(std::span<int>(order));

  const int count = m / group_size;
  const int extra = m % group_size;
  GroupAssignment g;
  g.round = round;
  int at = 0;
  for (int k = 0; k < count; ++k) {
    // the remainder goes one client at a time to the trailing groups, so
    // sizes never differ by more than one
    const int size = group_size + extra / count + (k >= count - extra % count ? 1 : 0);
    g.groups.emplace_back(order.begin() + at, order.begin() + at + size);
    at += size;
  }
  for (const auto& grp : g.groups) {
    g.arbitrators.push_back(grp[rng.below(grp.size())]);
  }
  return g;
}

ModelWeights aggregate(const std::vector<const ModelWeights*>& models,
                       const std::vector<double>& counts) {
  if (models.empty()) throw Error(ErrorKind::EmptySet, "no models to aggregate");
  if (models.size() != counts.size()) throw Error(ErrorKind::LengthMismatch, "models vs counts");
  for (const auto* m : models) {
    if (!(m->arch == models.front()->arch)) throw Error(ErrorKind::ArchMismatch, "architectures differ");
  }
  double total = 0.0;
  for (double c : counts) {
    if (!(c > 0.0)) throw Error(ErrorKind::InvalidConfig, "sample counts must be positive");
    total += c;
  }
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(models.front()->parameter_count()));
  for (std::size_t i = 0; i < models.size(); ++i) acc += (counts[i] / total) * models[i]->flatten();
  ModelWeights out = *models.front();
  out.assign_flat(acc);
  return out;
}

ModelWeights aggregate(const std::vector<ModelWeights>& models, const std::vector<double>& counts) {
  std::vector<const ModelWeights*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  return aggregate(ptrs, counts);
}

ClientDevice::ClientDevice(int id, LabeledFrames local_data, ModelWeights model)
    : id_(id), data_(std::move(local_data)), model_(std::move(model)), opt_(make_adam(model_)) {}

void ClientDevice::train(const TrainOptions& options) {
  if (options.epochs == 0 || data_.empty()) return;
  train_local(model_, opt_, data_, options);
}

std::vector<int> ClientDevice::local_labels() const {
  std::vector<int> labels = data_.y;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

FederatedNetworkState make_network(const std::vector<LabeledFrames>& client_data,
                                   const ModelWeights& initial) {
  FederatedNetworkState state;
  for (std::size_t i = 0; i < client_data.size(); ++i) {
    state.clients.emplace_back(static_cast<int>(i), client_data[i], initial);
  }
  return state;
}

Evaluation evaluate_clients(const FederatedNetworkState& state, const LabeledFrames& held_out) {
  Evaluation mean;
  if (state.clients.empty() || held_out.empty()) return mean;
  for (const auto& c : state.clients) {
    const Evaluation e = evaluate(c.weights(), held_out);
    mean.accuracy += e.accuracy;
    mean.loss += e.loss;
  }
  mean.accuracy /= static_cast<double>(state.clients.size());
  mean.loss /= static_cast<double>(state.clients.size());
  return mean;
}

namespace {

void finish_round(FederatedNetworkState& state, const FederatedConfig& cfg,
                  const LabeledFrames& held_out, double lr) {
  std::vector<int> ids;
  for (const auto& c : state.clients) ids.push_back(c.id());
  GroupAssignment groups = form_groups(ids, std::min<int>(cfg.group_size, static_cast<int>(ids.size())),
                                       state.round, cfg.seed);
  for (const auto& grp : groups.groups) {
    if (grp.size() < 2) continue;
    std::vector<const ModelWeights*> models;
    std::vector<double> counts;
    for (int id : grp) {
      models.push_back(&state.clients[id].weights());
      counts.push_back(static_cast<double>(std::max<Eigen::Index>(state.clients[id].sample_count(), 1)));
    }
    ModelWeights merged = aggregate(models, counts);
    merged.version = state.round + 1;
    for (int id : grp) state.clients[id].set_weights(merged);
  }
  state.groupings.push_back(std::move(groups));
  const Evaluation e = evaluate_clients(state, held_out);
  state.history.push_back({state.round, cfg.mode, cfg.group_size, e.accuracy, e.loss, lr});
  ++state.round;
}

TrainOptions round_options(const FederatedConfig& cfg, int round, int client) {
  return {lr_schedule(round, cfg), cfg.local_epochs, cfg.batch_size,
          client_train_seed(cfg.seed, round, client)};
}

}  // namespace

void run_round(FederatedNetworkState& state, const FederatedConfig& cfg,
               const LabeledFrames& held_out) {
  const double lr = lr_schedule(state.round, cfg);
  const auto n = static_cast<long>(state.clients.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    state.clients[i].train(round_options(cfg, state.round, state.clients[i].id()));
  }
  finish_round(state, cfg, held_out, lr);
}

void run_round_serial(FederatedNetworkState& state, const FederatedConfig& cfg,
                      const LabeledFrames& held_out) {
  const double lr = lr_schedule(state.round, cfg);
  for (auto& c : state.clients) c.train(round_options(cfg, state.round, c.id()));
  finish_round(state, cfg, held_out, lr);
}

FedResult run_federated(const std::vector<LabeledFrames>& by_speaker, const LabeledFrames& held_out,
                        const ModelArch& arch, const FederatedConfig& cfg) {
  cfg.validate();
  const ModelWeights initial = init_model(arch, derive_seed(cfg.seed, kInitTag));
  FedResult result;
  if (cfg.mode == FedMode::Centralized) {
    const LabeledFrames pooled = concat(by_speaker);
    ModelWeights w = initial;
    AdamState opt = make_adam(w);
    for (int r = 0; r < cfg.rounds; ++r) {
      if (cfg.local_epochs > 0) train_local(w, opt, pooled, round_options(cfg, r, 0));
      const Evaluation e = held_out.empty() ? Evaluation{} : evaluate(w, held_out);
      result.history.push_back({r, cfg.mode, 1, e.accuracy, e.loss, lr_schedule(r, cfg)});
    }
    result.final_model = std::move(w);
    return result;
  }

  const auto parts = cfg.mode == FedMode::NonIid
                         ? partition_non_iid(by_speaker, cfg.num_clients)
                         : partition_iid(by_speaker, cfg.num_clients, cfg.seed);
  FederatedNetworkState state = make_network(parts, initial);
  for (int r = 0; r < cfg.rounds; ++r) run_round(state, cfg, held_out);
  result.history = state.history;
  result.final_model = state.clients.front().weights();
  return result;
}

void write_history_csv(const std::vector<RoundRecord>& history, std::ostream& out) {
  out << "round,mode,group_size,accuracy,loss,lr\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.round << ',' << to_string(r.mode) << ',' << r.group_size << ',' << r.accuracy << ','
        << r.loss << ',' << r.lr << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace qsd
