#include "qsd/identifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "qsd/error.hpp"
#include "qsd/random.hpp"

namespace qsd {

void ModelArch::validate() const {
  if (input_dim < 1) throw Error(ErrorKind::InvalidArch, "input_dim must be positive");
  if (num_classes < 2) throw Error(ErrorKind::InvalidArch, "num_classes must be >= 2");
  if (hidden_sizes.empty()) throw Error(ErrorKind::InvalidArch, "hidden_sizes must be non-empty");
  for (int h : hidden_sizes) {
    if (h < 1) throw Error(ErrorKind::InvalidArch, "hidden sizes must be positive");
  }
}

std::size_t ModelArch::parameter_count() const {
  std::size_t count = 0;
  int in = input_dim;
  for (int h : hidden_sizes) {
    count += static_cast<std::size_t>(in) * h + h;
    in = h;
  }
  return count + static_cast<std::size_t>(in) * num_classes + num_classes;
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t count = 0;
  for (const auto& l : layers) count += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return count;
}

Vector ModelWeights::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

void ModelWeights::assign_flat(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw Error(ErrorKind::ArchMismatch, "flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  for (auto& l : layers) {
    l.weight.reshaped<Eigen::RowMajor>() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

namespace {

std::vector<DenseLayer> zeros_like(const ModelWeights& w) {
  std::vector<DenseLayer> out;
  out.reserve(w.layers.size());
  for (const auto& l : w.layers) {
    out.push_back({RowMatrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

void check_input(const ModelWeights& w, Eigen::Index cols) {
  if (cols != w.arch.input_dim) {
    throw Error(ErrorKind::DimensionMismatch, "input has " + std::to_string(cols) +
                                                  " features, model expects " +
                                                  std::to_string(w.arch.input_dim));
  }
}

// Row-wise logits for a block of inputs.
RowMatrix logits_of(const ModelWeights& w, RowsView x) {
  RowMatrix h = x;
  for (std::size_t k = 0; k < w.layers.size(); ++k) {
    const auto& l = w.layers[k];
    RowMatrix z = h * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    if (k + 1 < w.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

void softmax_rows(RowMatrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
}

void check_labels(const ModelWeights& w, std::span<const int> y) {
  for (int label : y) {
    if (label < 0 || label >= w.arch.num_classes) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                  std::to_string(w.arch.num_classes) + ")");
    }
  }
}

}  // namespace

AdamState make_adam(const ModelWeights& w) {
  AdamState s;
  s.m = zeros_like(w);
  s.v = zeros_like(w);
  return s;
}

LabeledFrames concat(const std::vector<LabeledFrames>& parts) {
  LabeledFrames out;
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    rows += p.size();
    if (p.size() > 0) cols = p.x.cols();
  }
  out.x.resize(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.x.middleRows(at, p.size()) = p.x;
    at += p.size();
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
  }
  return out;
}

ModelWeights init_model(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  ModelWeights w;
  w.arch = arch;
  Rng rng(derive_seed(seed, 0x1417));
  int in = arch.input_dim;
  std::vector<int> outs = arch.hidden_sizes;
  outs.push_back(arch.num_classes);
  for (int out : outs) {
    DenseLayer l{RowMatrix(out, in), Vector::Zero(out)};
    const double limit = std::sqrt(6.0 / in);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-limit, limit);
    w.layers.push_back(std::move(l));
    in = out;
  }
  return w;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

ForwardResult forward(const ModelWeights& w, const Eigen::Ref<const Vector>& frame) {
  check_input(w, frame.size());
  const RowMatrix row = frame.transpose();
  ForwardResult r;
  r.embedding = logits_of(w, row).row(0).transpose();
  r.probs = softmax(r.embedding);
  return r;
}

namespace {

constexpr Eigen::Index kBatchBlock = 256;

void forward_block(const ModelWeights& w, RowsView rows, RowMatrix& out, Eigen::Index b) {
  const Eigen::Index begin = b * kBatchBlock;
  const Eigen::Index len = std::min(kBatchBlock, rows.rows() - begin);
  out.middleRows(begin, len) = logits_of(w, rows.middleRows(begin, len));
}

}  // namespace

// Same blocks as the parallel version, one after another, so results match bit for bit.
RowMatrix forward_batch_serial(const ModelWeights& w, RowsView rows) {
  check_input(w, rows.cols());
  RowMatrix out(rows.rows(), w.arch.num_classes);
  const Eigen::Index blocks = (rows.rows() + kBatchBlock - 1) / kBatchBlock;
  for (Eigen::Index b = 0; b < blocks; ++b) forward_block(w, rows, out, b);
  return out;
}

RowMatrix forward_batch(const ModelWeights& w, RowsView rows) {
  check_input(w, rows.cols());
  RowMatrix out(rows.rows(), w.arch.num_classes);
  const Eigen::Index blocks = (rows.rows() + kBatchBlock - 1) / kBatchBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) forward_block(w, rows, out, b);
  return out;
}

double loss_and_gradient(const ModelWeights& w, RowsView x, std::span<const int> y,
                         std::vector<DenseLayer>* grad) {
  check_input(w, x.cols());
  if (x.rows() == 0) throw Error(ErrorKind::EmptyData, "no frames");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw Error(ErrorKind::LengthMismatch, "labels and frames differ in length");
  }
  check_labels(w, y);
  const auto n = static_cast<double>(x.rows());
  const std::size_t depth = w.layers.size();

  // activations[k] is the input of layer k
  std::vector<RowMatrix> activations;
  activations.reserve(depth);
  RowMatrix h = x;
  for (std::size_t k = 0; k < depth; ++k) {
    activations.push_back(h);
    RowMatrix z = h * w.layers[k].weight.transpose();
    z.rowwise() += w.layers[k].bias.transpose();
    if (k + 1 < depth) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  RowMatrix probs = h;
  softmax_rows(probs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    loss -= std::log(std::max(probs(i, y[i]), 1e-300));
  }
  loss /= n;
  if (grad == nullptr) return loss;

  grad->resize(depth);
  RowMatrix delta = probs;
  for (Eigen::Index i = 0; i < x.rows(); ++i) delta(i, y[i]) -= 1.0;
  delta /= n;
  for (std::size_t k = depth; k-- > 0;) {
    auto& g = (*grad)[k];
    g.weight = delta.transpose() * activations[k];
    g.bias = delta.colwise().sum().transpose();
    if (k == 0) break;
    RowMatrix back = delta * w.layers[k].weight;
    // ReLU derivative: activations[k] is relu(z) of the previous layer
    back = back.cwiseProduct((activations[k].array() > 0.0).cast<double>().matrix());
    delta = std::move(back);
  }
  return loss;
}

std::vector<double> train_local(ModelWeights& w, AdamState& opt, const LabeledFrames& data,
                                const TrainOptions& options) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "no training frames");
  if (static_cast<Eigen::Index>(data.y.size()) != data.size()) {
    throw Error(ErrorKind::LengthMismatch, "labels and frames differ in length");
  }
  check_input(w, data.x.cols());
  check_labels(w, data.y);
  if (opt.m.size() != w.layers.size()) opt = make_adam(w);

  const Eigen::Index n = data.size();
  const Eigen::Index batch = std::max(1, options.batch_size);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<DenseLayer> grad;
  std::vector<double> losses;
  RowMatrix xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(options.seed, 0x7a41, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<Eigen::Index>(order));
    double epoch_loss = 0.0;
    for (Eigen::Index begin = 0; begin < n; begin += batch) {
      const Eigen::Index len = std::min(batch, n - begin);
      xb.resize(len, data.x.cols());
      yb.resize(static_cast<std::size_t>(len));
      for (Eigen::Index i = 0; i < len; ++i) {
        xb.row(i) = data.x.row(order[begin + i]);
        yb[i] = data.y[order[begin + i]];
      }
      epoch_loss += loss_and_gradient(w, xb, yb, &grad) * static_cast<double>(len);

      ++opt.step;
      const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
      for (std::size_t k = 0; k < w.layers.size(); ++k) {
        auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
          m = opt.beta1 * m + (1.0 - opt.beta1) * g;
          v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
          param.array() -= options.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
        };
        update(w.layers[k].weight, opt.m[k].weight, opt.v[k].weight, grad[k].weight);
        update(w.layers[k].bias, opt.m[k].bias, opt.v[k].bias, grad[k].bias);
      }
    }
    losses.push_back(epoch_loss / static_cast<double>(n));
  }
  return losses;
}

Evaluation evaluate(const ModelWeights& w, const LabeledFrames& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "no evaluation frames");
  RowMatrix probs = forward_batch(w, data.x);
  softmax_rows(probs);
  Evaluation e;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    if (arg == data.y[i]) e.accuracy += 1.0;
    e.loss -= std::log(std::max(probs(i, data.y[i]), 1e-300));
  }
  e.accuracy /= static_cast<double>(data.size());
  e.loss /= static_cast<double>(data.size());
  return e;
}

Embedding embed_segment(const ModelWeights& w, RowsView rows, std::string source) {
  if (rows.rows() == 0) throw Error(ErrorKind::EmptySegment, "segment has no frames");
  Embedding e;
  e.values = forward_batch(w, rows).colwise().mean().transpose();
  e.source = std::move(source);
  return e;
}

double cosine_similarity(std::span<const Vector> td, std::span<const Vector> cd) {
  if (td.empty() || cd.empty()) throw Error(ErrorKind::EmptySet, "embedding set is empty");
  const Eigen::Index dim = td.front().size();
  auto normed = [&](std::span<const Vector> set) {
    std::vector<Vector> out;
    for (const auto& v : set) {
      if (v.size() != dim) throw Error(ErrorKind::DimensionMismatch, "embedding sizes differ");
      const double norm = v.norm();
      if (!(norm > 0.0)) throw Error(ErrorKind::ZeroNormEmbedding, "embedding has zero norm");
      out.push_back(v / norm);
    }
    return out;
  };
  const auto a = normed(td);
  const auto b = normed(cd);
  double acc = 0.0;
  for (const auto& c : b) {
    for (const auto& t : a) acc += t.dot(c);
  }
  const double s = acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  return std::clamp(s, -1.0, 1.0);
}

Prediction predict_cluster(const ModelWeights& w, RowsView rows) {
  if (rows.rows() == 0) throw Error(ErrorKind::EmptyCluster, "cluster has no frames");
  RowMatrix probs = forward_batch(w, rows);
  softmax_rows(probs);
  const Vector mean = probs.colwise().mean().transpose();
  Prediction p;
  p.confidence = mean(0);
  for (Eigen::Index k = 1; k < mean.size(); ++k) {
    if (mean(k) > p.confidence) {
      p.confidence = mean(k);
      p.speaker_id = static_cast<int>(k);
    }
  }
  return p;
}

void EmbeddingBank::add(int speaker, Vector embedding) {
  auto& list = entries_[speaker];
  list.push_back(std::move(embedding));
  while (list.size() > cap_) list.pop_front();
}

const std::deque<Vector>& EmbeddingBank::entries(int speaker) const {
  static const std::deque<Vector> empty;
  const auto it = entries_.find(speaker);
  return it == entries_.end() ? empty : it->second;
}

std::vector<Vector> EmbeddingBank::as_vector(int speaker) const {
  const auto& e = entries(speaker);
  return {e.begin(), e.end()};
}

std::size_t EmbeddingBank::size(int speaker) const { return entries(speaker).size(); }

double LrSchedule::at(int step) const { return lr0 * std::pow(decay, step); }

std::vector<OnlineDecision> online_update(ModelWeights& w, AdamState& opt,
                                          const std::vector<Segment>& segments,
                                          const ClusterSet& clusters, EmbeddingBank& bank,
                                          const OnlineUpdateConfig& cfg) {
  std::vector<OnlineDecision> log;
  int epochs_run = 0;
  for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
    const auto& members = clusters.clusters[c];
    if (members.empty()) throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(c));
    const RowMatrix rows = concat_rows(segments, members);
    const Prediction pred = predict_cluster(w, rows);

    std::vector<Vector> cd;
    for (auto s : members) cd.push_back(embed_segment(w, segments[s].rows).values);
    const auto td = bank.as_vector(pred.speaker_id);
    OnlineDecision d{c, pred.speaker_id, cosine_similarity(td, cd), false};

    if (d.similarity >= cfg.tau) {
      LabeledFrames data{rows, std::vector<int>(static_cast<std::size_t>(rows.rows()), pred.speaker_id)};
      train_local(w, opt, data,
                  {cfg.schedule.at(epochs_run), 1, cfg.batch_size,
                   derive_seed(cfg.seed, 0x0411, static_cast<std::uint64_t>(c))});
      ++epochs_run;
      ++w.version;
      for (auto& v : cd) bank.add(pred.speaker_id, std::move(v));
      d.updated = true;
    }
    log.push_back(d);
  }
  return log;
}

void seed_bank(EmbeddingBank& bank, const ModelWeights& w, const LabeledFrames& data,
               int chunk_frames) {
  std::map<int, std::vector<Eigen::Index>> by_label;
  for (Eigen::Index i = 0; i < data.size(); ++i) by_label[data.y[i]].push_back(i);
  for (const auto& [label, idx] : by_label) {
    for (std::size_t begin = 0; begin < idx.size(); begin += static_cast<std::size_t>(chunk_frames)) {
      const std::size_t len = std::min<std::size_t>(chunk_frames, idx.size() - begin);
      RowMatrix rows(static_cast<Eigen::Index>(len), data.x.cols());
      for (std::size_t i = 0; i < len; ++i) rows.row(static_cast<Eigen::Index>(i)) = data.x.row(idx[begin + i]);
      bank.add(label, embed_segment(w, rows).values);
    }
  }
}

void write_checkpoint(const ModelWeights& w, std::ostream& out) {
  out << "qsd-model 1\n";
  out << "version " << w.version << '\n';
  out << "arch " << w.arch.input_dim << ' ' << w.arch.num_classes << ' ' << w.arch.hidden_sizes.size();
  for (int h : w.arch.hidden_sizes) out << ' ' << h;
  out << '\n' << std::hexfloat;
  for (const auto& l : w.layers) {
    out << "layer " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) out << (j ? " " : "") << l.weight(i, j);
      out << '\n';
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out << (i ? " " : "") << l.bias(i);
    out << '\n';
  }
  out << std::defaultfloat;
}

ModelWeights read_checkpoint(std::istream& in) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::IoFailure, "checkpoint: " + what); };
  std::string tag;
  int format = 0;
  if (!(in >> tag >> format) || tag != "qsd-model" || format != 1) fail("bad header");
  ModelWeights w;
  std::size_t hidden = 0;
  if (!(in >> tag >> w.version) || tag != "version") fail("missing version");
  if (!(in >> tag >> w.arch.input_dim >> w.arch.num_classes >> hidden) || tag != "arch") {
    fail("missing arch");
  }
  w.arch.hidden_sizes.resize(hidden);
  for (auto& h : w.arch.hidden_sizes) {
    if (!(in >> h)) fail("truncated arch");
  }
  w.arch.validate();
  // strtod accepts the hex-float text produced above
  auto read_value = [&]() {
    std::string token;
    if (!(in >> token)) fail("truncated values");
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str()) fail("bad value '" + token + "'");
    return v;
  };
  const ModelWeights shape = init_model(w.arch, 0);
  for (const auto& ref : shape.layers) {
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> rows >> cols) || tag != "layer") fail("missing layer");
    if (rows != ref.weight.rows() || cols != ref.weight.cols()) fail("layer shape does not match arch");
    DenseLayer l{RowMatrix(rows, cols), Vector(rows)};
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = read_value();
    for (Eigen::Index i = 0; i < rows; ++i) l.bias(i) = read_value();
    w.layers.push_back(std::move(l));
  }
  return w;
}

void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  write_checkpoint(w, out);
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace qsd
