#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "qsd/error.hpp"
#include "qsd/federated.hpp"

using namespace qsd;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::IoFailure;
}

bool bit_equal(const ModelWeights& a, const ModelWeights& b) {
  const Vector x = a.flatten(), y = b.flatten();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
}

// Gaussian blob per speaker, label = speaker index.
std::vector<LabeledFrames> speakers(Rng& rng, int count, int frames, Eigen::Index d = 12) {
  std::vector<LabeledFrames> out;
  for (int k = 0; k < count; ++k) {
    LabeledFrames f;
    f.x = oracle::gaussian_rows(rng, frames, d);
    f.x.col(k % d).array() += 3.0;
    if (k >= d) f.x.col((k + 1) % d).array() -= 3.0;
    f.y.assign(static_cast<std::size_t>(frames), k);
    out.push_back(std::move(f));
  }
  return out;
}

void check_partition(const GroupAssignment& g, int m, int group_size) {
  std::vector<int> seen(static_cast<std::size_t>(m), 0);
  std::size_t lo = SIZE_MAX, hi = 0;
  REQUIRE(g.arbitrators.size() == g.groups.size());
  for (std::size_t k = 0; k < g.groups.size(); ++k) {
    const auto& grp = g.groups[k];
    for (int id : grp) ++seen[static_cast<std::size_t>(id)];
    CHECK(std::find(grp.begin(), grp.end(), g.arbitrators[k]) != grp.end());
    lo = std::min(lo, grp.size());
    hi = std::max(hi, grp.size());
  }
  for (int v : seen) CHECK(v == 1);
  CHECK(hi - lo <= 1);
  CHECK(g.groups.size() == static_cast<std::size_t>(m / group_size));
}

}  // namespace

TEST_CASE("lr_schedule") {
  FederatedConfig cfg;
  CHECK(lr_schedule(0, cfg) == 1.0);
  CHECK(lr_schedule(2, cfg) == doctest::Approx(0.81));
  cfg.lr_decay = 1.0;
  CHECK(lr_schedule(17, cfg) == cfg.lr0);
  cfg.lr_decay = 0.7;
  for (int r = 0; r < 30; ++r) CHECK(lr_schedule(r + 1, cfg) <= lr_schedule(r, cfg));
}

TEST_CASE("partition_non_iid") {
  Rng rng(1);
  const auto spk = speakers(rng, 12, 20);
  const auto parts = partition_non_iid(spk, 12);
  REQUIRE(parts.size() == 12);
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    total += parts[i].size();
    for (int y : parts[i].y) CHECK(y == static_cast<int>(i));
    CHECK(parts[i].x == spk[i].x);
  }
  CHECK(total == 240);
  const auto one = partition_non_iid({spk[0]}, 1);
  CHECK(one[0].size() == 20);
  CHECK(kind_of([&] { partition_non_iid(spk, 13); }) == ErrorKind::TooManyClients);
}

TEST_CASE("partition_iid: even split and proportions") {
  Rng rng(2);
  const auto two = speakers(rng, 2, 100);
  const auto parts = partition_iid(two, 2, 3);
  REQUIRE(parts.size() == 2);
  for (const auto& p : parts) {
    CHECK(std::count(p.y.begin(), p.y.end(), 0) == 50);
    CHECK(std::count(p.y.begin(), p.y.end(), 1) == 50);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(5));
    std::vector<LabeledFrames> spk;
    for (int k = 0; k < classes; ++k) {
      LabeledFrames f;
      const int n = 10 + static_cast<int>(rng.below(50));
      f.x = oracle::gaussian_rows(rng, n, 3);
      f.y.assign(static_cast<std::size_t>(n), k);
      spk.push_back(std::move(f));
    }
    const int clients = 1 + static_cast<int>(rng.below(10));
    const auto ps = partition_iid(spk, clients, static_cast<std::uint64_t>(trial));
    for (const auto& p : ps) {
      for (int k = 0; k < classes; ++k) {
        const double share = static_cast<double>(spk[k].size()) / clients;
        CHECK(std::abs(std::count(p.y.begin(), p.y.end(), k) - share) <= 1.0);
      }
    }
    const auto again = partition_iid(spk, clients, static_cast<std::uint64_t>(trial));
    for (std::size_t c = 0; c < ps.size(); ++c) CHECK(ps[c].x == again[c].x);
  }
  CHECK(kind_of([&] { partition_iid(two, 101, 0); }) == ErrorKind::InsufficientData);
}

TEST_CASE("form_groups: remainder, validity, determinism") {
  std::vector<int> ids(7);
  std::iota(ids.begin(), ids.end(), 0);
  const GroupAssignment g = form_groups(ids, 2, 0, 9);
  REQUIRE(g.groups.size() == 3);
  CHECK(g.groups[0].size() == 2);
  CHECK(g.groups[1].size() == 2);
  CHECK(g.groups[2].size() == 3);

  const GroupAssignment all = form_groups(ids, 7, 0, 9);
  REQUIRE(all.groups.size() == 1);
  CHECK(all.groups[0].size() == 7);

  for (int m = 1; m <= 13; ++m) {
    std::vector<int> c(static_cast<std::size_t>(m));
    std::iota(c.begin(), c.end(), 0);
    for (int gs = 1; gs <= m; ++gs) {
      for (int round = 0; round < 3; ++round) check_partition(form_groups(c, gs, round, 5), m, gs);
    }
  }

  const auto a = form_groups(ids, 3, 4, 11), b = form_groups(ids, 3, 4, 11), c = form_groups(ids, 3, 5, 11);
  CHECK(a.groups == b.groups);
  CHECK(a.arbitrators == b.arbitrators);
  CHECK((a.groups != c.groups || a.arbitrators != c.arbitrators));
  CHECK(kind_of([&] { form_groups(ids, 8, 0, 0); }) == ErrorKind::BadGroupSize);
  CHECK(kind_of([&] { form_groups(ids, 0, 0, 0); }) == ErrorKind::BadGroupSize);
}

TEST_CASE("aggregate: weighted blend") {
  const ModelArch arch{4, {3}, 2};
  const ModelWeights w1 = init_model(arch, 1), w2 = init_model(arch, 2);
  CHECK(bit_equal(aggregate({w1}, {5.0}), w1));
  const Vector mean = aggregate({w1, w2}, {4.0, 4.0}).flatten();
  CHECK((mean - 0.5 * (w1.flatten() + w2.flatten())).cwiseAbs().maxCoeff() < 1e-15);
  const Vector blend = aggregate({w1, w2}, {1.0, 3.0}).flatten();
  const Vector expect = 0.25 * w1.flatten() + 0.75 * w2.flatten();
  CHECK((blend - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((aggregate({w1, w1, w1}, {1.0, 2.0, 7.0}).flatten() - w1.flatten()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(aggregate({w1, w2}, {1.0, 3.0}).arch == arch);
  CHECK(kind_of([&] { aggregate({w1, init_model(ModelArch{4, {5}, 2}, 0)}, {1.0, 1.0}); }) ==
        ErrorKind::ArchMismatch);
}

TEST_CASE("run_round: single group makes clients identical; zero epochs just aggregates") {
  Rng rng(3);
  const auto spk = speakers(rng, 4, 40);
  const ModelArch arch{12, {8}, 4};
  FederatedConfig cfg;
  cfg.num_clients = 4;
  cfg.group_size = 4;
  cfg.lr0 = 0.01;
  cfg.seed = 4;
  FederatedNetworkState state = make_network(partition_non_iid(spk, 4), init_model(arch, 5));
  run_round(state, cfg, concat(spk));
  for (const auto& c : state.clients) CHECK(bit_equal(c.weights(), state.clients[0].weights()));
  CHECK(state.round == 1);
  CHECK(state.history.size() == 1);

  // distinct starting weights, no training: each group ends at its blend
  FederatedNetworkState s2 = make_network(partition_non_iid(spk, 4), init_model(arch, 6));
  for (int i = 0; i < 4; ++i) s2.clients[i].set_weights(init_model(arch, 100 + i));
  std::vector<ModelWeights> start;
  for (const auto& c : s2.clients) start.push_back(c.weights());
  cfg.group_size = 2;
  cfg.local_epochs = 0;
  run_round(s2, cfg, concat(spk));
  for (const auto& grp : s2.groupings[0].groups) {
    std::vector<ModelWeights> members;
    std::vector<double> counts;
    for (int id : grp) {
      members.push_back(start[id]);
      counts.push_back(40.0);
    }
    const ModelWeights expect = aggregate(members, counts);
    for (int id : grp) CHECK(bit_equal(s2.clients[id].weights(), expect));
  }
}

TEST_CASE("run_round: parallel equals serial") {
  Rng rng(7);
  const auto spk = speakers(rng, 6, 50);
  const ModelArch arch{12, {16}, 6};
  FederatedConfig cfg;
  cfg.num_clients = 6;
  cfg.group_size = 2;
  cfg.lr0 = 0.01;
  cfg.seed = 8;
  FederatedNetworkState a = make_network(partition_non_iid(spk, 6), init_model(arch, 9));
  FederatedNetworkState b = a;
  for (int r = 0; r < 3; ++r) {
    run_round(a, cfg, concat(spk));
    run_round_serial(b, cfg, concat(spk));
  }
  for (std::size_t i = 0; i < a.clients.size(); ++i) CHECK(bit_equal(a.clients[i].weights(), b.clients[i].weights()));
  CHECK(a.history.back().accuracy == b.history.back().accuracy);
}

TEST_CASE("clients only expose weights; local data stays single-label") {
  Rng rng(10);
  const auto spk = speakers(rng, 3, 30);
  const FederatedNetworkState s = make_network(partition_non_iid(spk, 3), init_model(ModelArch{12, {4}, 3}, 1));
  for (const auto& c : s.clients) {
    CHECK(c.local_labels() == std::vector<int>{c.id()});
    CHECK(c.sample_count() == 30);
  }
}

TEST_CASE("grouping beats isolated clients on non-IID data") {
  Rng rng(11);
  const auto spk = speakers(rng, 4, 120);
  const auto held = speakers(rng, 4, 30);
  const ModelArch arch{12, {16}, 4};
  FederatedConfig cfg;
  cfg.num_clients = 4;
  cfg.rounds = 20;
  cfg.lr0 = 0.01;
  cfg.seed = 12;
  cfg.group_size = 2;
  const double grouped = run_federated(spk, concat(held), arch, cfg).history.back().accuracy;
  cfg.group_size = 1;
  const double isolated = run_federated(spk, concat(held), arch, cfg).history.back().accuracy;
  CHECK(grouped > isolated);
}

TEST_CASE("centralized mode equals train_local on pooled data") {
  Rng rng(13);
  const auto spk = speakers(rng, 3, 40);
  const ModelArch arch{12, {8}, 3};
  FederatedConfig cfg;
  cfg.mode = FedMode::Centralized;
  cfg.rounds = 4;
  cfg.lr0 = 0.01;
  cfg.seed = 14;
  const FedResult r = run_federated(spk, concat(spk), arch, cfg);
  CHECK(r.history.size() == 4);

  // same schedule by hand: one epoch per round at lr0·decay^round
  ModelWeights w = init_model(arch, derive_seed(cfg.seed, 0x1417));
  AdamState opt = make_adam(w);
  const LabeledFrames pooled = concat(spk);
  for (int round = 0; round < cfg.rounds; ++round) {
    train_local(w, opt, pooled,
                {lr_schedule(round, cfg), 1, cfg.batch_size,
                 derive_seed(derive_seed(derive_seed(cfg.seed, 0xc11e), static_cast<std::uint64_t>(round)), 0)});
  }
  CHECK(bit_equal(w, r.final_model));
}

TEST_CASE("run_federated: histories, modes, csv") {
  Rng rng(15);
  const auto spk = speakers(rng, 4, 30);
  const ModelArch arch{12, {8}, 4};
  FederatedConfig cfg;
  cfg.num_clients = 4;
  cfg.rounds = 3;
  cfg.lr0 = 0.01;
  for (FedMode m : {FedMode::NonIid, FedMode::Iid, FedMode::Centralized}) {
    cfg.mode = m;
    const FedResult r = run_federated(spk, concat(spk), arch, cfg);
    REQUIRE(r.history.size() == 3);
    for (std::size_t i = 0; i < r.history.size(); ++i) {
      CHECK(r.history[i].round == static_cast<int>(i));
      CHECK(r.history[i].lr == doctest::Approx(lr_schedule(static_cast<int>(i), cfg)));
      CHECK(r.history[i].mode == m);
    }
  }
  std::ostringstream out;
  write_history_csv(run_federated(spk, concat(spk), arch, cfg).history, out);
  CHECK(out.str().rfind("round,mode,group_size,accuracy,loss,lr\n0,centralized,1,", 0) == 0);
  CHECK(parse_fed_mode("grouped") == FedMode::NonIid);
  CHECK(kind_of([] { parse_fed_mode("p2p"); }) == ErrorKind::InvalidConfig);
  cfg.lr0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
