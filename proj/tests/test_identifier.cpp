#include <doctest.h>

#include <cstring>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "qsd/error.hpp"
#include "qsd/identifier.hpp"

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

ModelWeights zero_model(const ModelArch& arch) {
  ModelWeights w = init_model(arch, 0);
  w.assign_flat(Vector::Zero(static_cast<Eigen::Index>(w.parameter_count())));
  return w;
}

LabeledFrames blobs(Rng& rng, int classes, int per_class, Eigen::Index d, double sep) {
  LabeledFrames data;
  data.x.resize(classes * per_class, d);
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const Eigen::Index r = c * per_class + i;
      for (Eigen::Index j = 0; j < d; ++j) data.x(r, j) = rng.normal() + (j == c % d ? sep : 0.0);
      data.y.push_back(c);
    }
  }
  return data;
}

}  // namespace

TEST_CASE("init_model: shapes, count, determinism, fan-in bound") {
  const ModelArch arch{12, {64, 64}, 12};
  CHECK(arch.parameter_count() == 5772);
  const ModelWeights a = init_model(arch, 5), b = init_model(arch, 5), c = init_model(arch, 6);
  CHECK(a.parameter_count() == 5772);
  CHECK(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, c));
  REQUIRE(a.layers.size() == 3);
  CHECK(a.layers[0].weight.rows() == 64);
  CHECK(a.layers[0].weight.cols() == 12);
  CHECK(a.layers[2].weight.rows() == 12);
  CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 12.0));
  CHECK(a.layers[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 64.0));
  CHECK(a.layers[0].bias.isZero());
  CHECK(kind_of([] { init_model(ModelArch{12, {}, 12}, 0); }) == ErrorKind::InvalidArch);
  CHECK(kind_of([] { init_model(ModelArch{12, {8}, 1}, 0); }) == ErrorKind::InvalidArch);
}

TEST_CASE("flatten/assign_flat round trip") {
  ModelWeights w = init_model(ModelArch{5, {7}, 3}, 1);
  const Vector f = w.flatten();
  ModelWeights z = zero_model(w.arch);
  z.assign_flat(f);
  CHECK(bit_equal(w, z));
  CHECK(kind_of([&] { z.assign_flat(Vector::Zero(3)); }) == ErrorKind::ArchMismatch);
}

TEST_CASE("forward: simplex, zero model, shift invariance") {
  const ModelWeights w = init_model(ModelArch{12, {64, 64}, 12}, 2);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Vector x(12);
    for (auto& v : x) v = rng.normal(0.0, 5.0);
    const ForwardResult r = forward(w, x);
    CHECK(std::abs(r.probs.sum() - 1.0) < 1e-9);
    CHECK(r.probs.minCoeff() > 0.0);
    CHECK(r.probs.maxCoeff() < 1.0);
  }
  const ForwardResult z = forward(zero_model(w.arch), Vector::Ones(12));
  CHECK(z.embedding.isZero());
  for (auto p : z.probs) CHECK(p == doctest::Approx(1.0 / 12.0));

  Vector logits(4);
  logits << 0.3, -1.0, 2.0, 0.5;
  const Vector shifted = (logits.array() + 17.0).matrix();
  CHECK((softmax(logits) - softmax(shifted)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(kind_of([&] { forward(w, Vector::Ones(11)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("forward_batch: parallel equals serial and per-row forward") {
  const ModelWeights w = init_model(ModelArch{12, {64, 64}, 8}, 4);
  Rng rng(5);
  const RowMatrix x = oracle::gaussian_rows(rng, 1000, 12);
  const RowMatrix p = forward_batch(w, x), s = forward_batch_serial(w, x);
  CHECK(p == s);
  for (Eigen::Index i = 0; i < x.rows(); i += 97) {
    CHECK((forward(w, x.row(i).transpose()).embedding - p.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(6);
  for (const ModelArch& arch : {ModelArch{12, {4}, 3}, ModelArch{12, {64, 64}, 12}, ModelArch{3, {5, 4}, 2}}) {
    ModelWeights w = init_model(arch, 7);
    // nudge biases off zero so no ReLU sits exactly on its kink
    Vector flat = w.flatten();
    for (auto& v : flat) v += rng.uniform(-0.05, 0.05);
    w.assign_flat(flat);
    const RowMatrix x = oracle::gaussian_rows(rng, 20, arch.input_dim);
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) y.push_back(static_cast<int>(rng.below(arch.num_classes)));
    std::vector<DenseLayer> grad;
    loss_and_gradient(w, x, y, &grad);
    ModelWeights g = w;
    g.layers = grad;
    const Vector analytic = g.flatten();
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < flat.size(); k += std::max<Eigen::Index>(1, flat.size() / 300)) {
      ModelWeights p = w, m = w;
      Vector fp = flat, fm = flat;
      fp(k) += h;
      fm(k) -= h;
      p.assign_flat(fp);
      m.assign_flat(fm);
      const double numeric = (loss_and_gradient(p, x, y, nullptr) - loss_and_gradient(m, x, y, nullptr)) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic(k)), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic(k)) / denom);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("train_local: lr 0 is a no-op; errors") {
  Rng rng(8);
  ModelWeights w = init_model(ModelArch{12, {16}, 3}, 9);
  const ModelWeights before = w;
  AdamState opt = make_adam(w);
  const LabeledFrames data = blobs(rng, 3, 20, 12, 3.0);
  train_local(w, opt, data, {0.0, 3, 8, 1});
  CHECK(bit_equal(w, before));

  LabeledFrames bad = data;
  bad.y[0] = 3;
  CHECK(kind_of([&] { train_local(w, opt, bad, {}); }) == ErrorKind::LabelOutOfRange);
  bad.y[0] = -1;
  CHECK(kind_of([&] { train_local(w, opt, bad, {}); }) == ErrorKind::LabelOutOfRange);
  CHECK(kind_of([&] { train_local(w, opt, LabeledFrames{}, {}); }) == ErrorKind::EmptyData);
}

TEST_CASE("train_local: separable toy data reaches 99% and loss falls") {
  Rng rng(10);
  LabeledFrames data;
  data.x.resize(200, 2);
  for (int i = 0; i < 200; ++i) {
    const int c = i % 2;
    data.x(i, 0) = rng.normal(c ? 2.0 : -2.0, 0.5);
    data.x(i, 1) = rng.normal();
    data.y.push_back(c);
  }
  ModelWeights w = init_model(ModelArch{2, {8}, 2}, 11);
  AdamState opt = make_adam(w);
  const auto losses = train_local(w, opt, data, {1e-3, 200, 32, 12});
  CHECK(evaluate(w, data).accuracy >= 0.99);
  CHECK(losses.back() < losses.front());
  for (std::size_t e = 10; e < losses.size(); e += 10) CHECK(losses[e] <= losses[e - 10] + 1e-9);
}

TEST_CASE("embed_segment: mean of per-frame outputs") {
  const ModelWeights w = init_model(ModelArch{12, {32}, 6}, 13);
  Rng rng(14);
  const RowMatrix x = oracle::gaussian_rows(rng, 37, 12);
  Vector brute = Vector::Zero(6);
  for (Eigen::Index i = 0; i < x.rows(); ++i) brute += forward(w, x.row(i).transpose()).embedding;
  brute /= 37.0;
  CHECK((embed_segment(w, x).values - brute).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((embed_segment(w, x.topRows(1)).values - forward(w, x.row(0).transpose()).embedding).norm() == 0.0);
  RowMatrix doubled(74, 12);
  doubled << x, x;
  CHECK((embed_segment(w, doubled).values - embed_segment(w, x).values).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(kind_of([&] { embed_segment(w, x.topRows(0)); }) == ErrorKind::EmptySegment);
}

TEST_CASE("cosine_similarity: hand cases, bounds, scale invariance, errors") {
  Vector v(2), a(2), b(2), c(2);
  v << 0.3, -0.8;
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  const std::vector<Vector> one{v};
  CHECK(cosine_similarity(one, one) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(cosine_similarity(std::vector<Vector>{a}, std::vector<Vector>{b})) < 1e-15);
  CHECK(std::abs(cosine_similarity(std::vector<Vector>{a, b}, std::vector<Vector>{c}) - 1.0 / std::numbers::sqrt2) < 1e-9);

  Rng rng(15);
  for (int t = 0; t < 200; ++t) {
    std::vector<Vector> td, cd;
    for (int i = 0; i < 1 + static_cast<int>(rng.below(5)); ++i) td.push_back(oracle::gaussian_rows(rng, 1, 6).row(0).transpose());
    for (int i = 0; i < 1 + static_cast<int>(rng.below(5)); ++i) cd.push_back(oracle::gaussian_rows(rng, 1, 6).row(0).transpose());
    const double s = cosine_similarity(td, cd);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    td[0] *= rng.uniform(0.01, 100.0);
    CHECK(std::abs(cosine_similarity(td, cd) - s) < 1e-12);
  }
  CHECK(kind_of([&] { cosine_similarity(std::vector<Vector>{}, one); }) == ErrorKind::EmptySet);
  CHECK(kind_of([&] { cosine_similarity(std::vector<Vector>{Vector::Zero(2)}, one); }) ==
        ErrorKind::ZeroNormEmbedding);
}

TEST_CASE("predict_cluster: mean softmax, tie rule, agreement with voting") {
  const ModelWeights zero = zero_model(ModelArch{12, {8}, 5});
  const Prediction p = predict_cluster(zero, RowMatrix::Ones(3, 12));
  CHECK(p.speaker_id == 0);
  CHECK(p.confidence == doctest::Approx(0.2));

  const ModelWeights w = init_model(ModelArch{12, {32}, 5}, 16);
  Rng rng(17);
  const RowMatrix single = oracle::gaussian_rows(rng, 1, 12);
  Eigen::Index arg;
  forward(w, single.row(0).transpose()).probs.maxCoeff(&arg);
  CHECK(predict_cluster(w, single).speaker_id == arg);

  int agree = 0, comparable = 0;
  for (int t = 0; t < 100; ++t) {
    const RowMatrix x = oracle::gaussian_rows(rng, 30, 12, rng.normal(0.0, 2.0));
    Vector mean = Vector::Zero(5);
    std::vector<int> votes(5, 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector pr = forward(w, x.row(i).transpose()).probs;
      mean += pr;
      pr.maxCoeff(&arg);
      ++votes[arg];
    }
    Eigen::Index mean_arg;
    mean.maxCoeff(&mean_arg);
    const int vote_arg = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    const Prediction q = predict_cluster(w, x);
    CHECK(q.speaker_id == mean_arg);
    CHECK(q.confidence == doctest::Approx(mean(mean_arg) / 30.0).epsilon(1e-12));
    if (mean_arg == vote_arg) {
      ++comparable;
      agree += q.speaker_id == vote_arg;
    }
  }
  CHECK(agree == comparable);
  MESSAGE("mean-softmax and majority vote coincided on " << comparable << " of 100 clusters");
  CHECK(kind_of([&] { predict_cluster(w, single.topRows(0)); }) == ErrorKind::EmptyCluster);
}

TEST_CASE("EmbeddingBank: FIFO cap per speaker") {
  EmbeddingBank bank(3);
  for (int i = 0; i < 5; ++i) bank.add(1, Vector::Constant(2, i));
  bank.add(2, Vector::Constant(2, 9));
  CHECK(bank.size(1) == 3);
  CHECK(bank.size(2) == 1);
  CHECK(bank.size(7) == 0);
  CHECK(bank.entries(1).front()(0) == 2.0);
  CHECK(bank.entries(1).back()(0) == 4.0);
}

namespace {

struct OnlineFixture {
  ModelWeights w;
  std::vector<Segment> segments;
  ClusterSet clusters;
  EmbeddingBank bank{200};
  LabeledFrames train;
  LabeledFrames held_out;

  OnlineFixture() {
    Rng rng(20);
    train = blobs(rng, 3, 200, 12, 2.0);
    held_out = blobs(rng, 3, 100, 12, 2.0);
    w = init_model(ModelArch{12, {16}, 3}, 21);
    AdamState opt = make_adam(w);
    train_local(w, opt, train, {3e-3, 5, 32, 22});
    seed_bank(bank, w, train, 50);
    // three clusters of two segments each, one per class
    for (int c = 0; c < 3; ++c) {
      std::vector<std::size_t> members;
      for (int k = 0; k < 2; ++k) {
        const LabeledFrames part = blobs(rng, 3, 40, 12, 2.0);
        Segment s;
        s.rows = part.x.middleRows(c * 40, 40);
        s.start_frame = static_cast<Eigen::Index>(segments.size()) * 100;
        s.end_frame = s.start_frame + 40;
        members.push_back(segments.size());
        segments.push_back(std::move(s));
      }
      clusters.clusters.push_back(members);
    }
  }
};

}  // namespace

TEST_CASE("online_update: closed gate leaves weights bit-identical") {
  OnlineFixture f;
  const ModelWeights before = f.w;
  AdamState opt = make_adam(f.w);
  OnlineUpdateConfig cfg;
  cfg.tau = 1.0 + 1e-9;
  const auto log = online_update(f.w, opt, f.segments, f.clusters, f.bank, cfg);
  CHECK(bit_equal(before, f.w));
  CHECK(log.size() == 3);
  for (const auto& d : log) CHECK_FALSE(d.updated);
  CHECK(f.bank.size(0) == 4);
}

TEST_CASE("online_update: open gate trains one epoch per cluster") {
  OnlineFixture f;
  AdamState opt = make_adam(f.w);
  OnlineUpdateConfig cfg;
  cfg.tau = -1.0;
  const auto log = online_update(f.w, opt, f.segments, f.clusters, f.bank, cfg);
  REQUIRE(log.size() == 3);
  for (std::size_t c = 0; c < log.size(); ++c) {
    CHECK(log[c].updated);
    CHECK(log[c].cluster_id == c);
  }
  // one epoch of batch 32 over 80 frames is 3 optimizer steps per cluster
  CHECK(opt.step == 9);
  CHECK(f.w.version == 3);
}

TEST_CASE("online_update: in-domain clusters at tau 0.5 do not hurt held-out accuracy") {
  OnlineFixture f;
  const double before = evaluate(f.w, f.held_out).accuracy;
  AdamState opt = make_adam(f.w);
  OnlineUpdateConfig cfg;
  cfg.tau = 0.5;
  const auto log = online_update(f.w, opt, f.segments, f.clusters, f.bank, cfg);
  int updated = 0;
  for (const auto& d : log) {
    updated += d.updated;
    CHECK(d.speaker == static_cast<int>(d.cluster_id));
  }
  CHECK(updated > 0);
  // a couple of held-out frames may flip either way
  CHECK(evaluate(f.w, f.held_out).accuracy >= before - 0.02);
}

TEST_CASE("LrSchedule") {
  const LrSchedule s{1.0, 0.5};
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(3) == 0.125);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ModelWeights w = init_model(ModelArch{12, {64, 32}, 12}, 30);
  w.version = 42;
  Vector flat = w.flatten();
  flat(0) = 1e-310;  // subnormal
  flat(1) = -0.0;
  flat(2) = 1.0 / 3.0;
  w.assign_flat(flat);
  std::stringstream ss;
  write_checkpoint(w, ss);
  const ModelWeights back = read_checkpoint(ss);
  CHECK(back.arch == w.arch);
  CHECK(back.version == 42);
  CHECK(bit_equal(w, back));

  const auto path = std::filesystem::temp_directory_path() / "qsd_ckpt_test.txt";
  save_checkpoint(w, path);
  CHECK(bit_equal(w, load_checkpoint(path)));

  std::stringstream bad("qsd-model 1\nversion 0\narch 12 3 1 4\nlayer 4 12\n0x1p+0");
  CHECK(kind_of([&] { read_checkpoint(bad); }) == ErrorKind::IoFailure);
  CHECK(kind_of([] { load_checkpoint("/nonexistent/dir/ckpt"); }) == ErrorKind::IoFailure);
}
