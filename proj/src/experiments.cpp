#include "qsd/experiments.hpp"

#include <iomanip>

#include "qsd/error.hpp"
#include "qsd/random.hpp"

namespace qsd {

std::vector<Conversation> make_conversation_corpus(int count, std::uint64_t seed, int bank_size,
                                                   const ConversationDraw& draw) {
  const auto bank = make_speaker_profiles(bank_size, derive_seed(seed, 0xba4c));
  std::vector<Conversation> corpus(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    const SynthSpec spec = draw_conversation(bank, derive_seed(seed, 0xc04e, static_cast<std::uint64_t>(i)), draw);
    auto [audio, truth] = synth_conversation(spec);
    audio.source_id = "conv" + std::to_string(i);
    corpus[static_cast<std::size_t>(i)] = {std::move(audio), std::move(truth)};
  }
  return corpus;
}

PreparedConversation prepare_conversation(const Conversation& c, const PipelineConfig& cfg) {
  const FrameSequence frames = frame_signal(c.audio, cfg.mfcc);
  return {compute_mfcc(frames, cfg.mfcc), analyze_silence(frames, cfg.silence, cfg.mfcc), c.truth};
}

std::vector<PreparedConversation> prepare_corpus(const std::vector<Conversation>& corpus,
                                                 const PipelineConfig& cfg) {
  std::vector<PreparedConversation> out;
  out.reserve(corpus.size());
  for (const auto& c : corpus) out.push_back(prepare_conversation(c, cfg));
  return out;
}

SegEvaluation evaluate_segmentation(const std::vector<PreparedConversation>& corpus,
                                    const SegConfig& seg, double hop_sec, double collar_sec) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "no conversations");
  SegEvaluation e;
  e.window = seg.window_frames;
  e.stride = seg.stride_fraction;
  e.method = seg.method;
  std::vector<MatchResult> matches;
  for (const auto& c : corpus) {
    ComputeCounter counter;
    const ChangePointList points = segment(c.features, c.silence.regions, seg, hop_sec, &counter);
    std::vector<double> detected;
    for (const auto& p : points.points) detected.push_back(p.time_sec);
    matches.push_back(match_change_points(c.truth.change_points_sec, detected, collar_sec));
    const SegScores s = seg_scores(matches.back());
    e.per_conversation.push_back(s);
    e.per_conversation_counters.push_back(counter.snapshot());
    e.fdr += s.fdr;
    e.mdr += s.mdr;
    e.f_score += s.f_seg;
    const auto snap = counter.snapshot();
    e.counters.covariance_count += snap.covariance_count;
    e.counters.delta_bic_count += snap.delta_bic_count;
    e.counters.t2_count += snap.t2_count;
  }
  const auto n = static_cast<double>(corpus.size());
  e.fdr /= n;
  e.mdr /= n;
  e.f_score /= n;
  e.f_of_means = f_from_rates(e.fdr, e.mdr);
  const CorpusScores cs = corpus_scores(matches);
  e.purity = cs.purity;
  e.coverage = cs.coverage;
  return e;
}

std::vector<SegEvaluation> sweep(const std::vector<PreparedConversation>& corpus, const SweepGrid& grid,
                                 const PipelineConfig& base) {
  std::vector<SegConfig> cells;
  for (int w : grid.windows) {
    for (double s : grid.strides) {
      for (SegMethod m : grid.methods) {
        SegConfig c = base.seg;
        c.window_frames = w;
        c.stride_fraction = s;
        c.method = m;
        cells.push_back(c);
      }
    }
  }
  std::vector<SegEvaluation> rows(cells.size());
  const auto count = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    rows[i] = evaluate_segmentation(corpus, cells[i], base.mfcc.hop_sec(), base.collar_sec);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SegEvaluation>& rows, std::ostream& out) {
  out << "window,stride,method,fdr,mdr,f_score,f_of_means,purity,coverage,delta_bic_count,t2_count,"
         "covariance_count\n";
  for (const auto& r : rows) {
    out << r.window << ',' << r.stride << ',' << to_string(r.method) << ',' << std::setprecision(8)
        << r.fdr << ',' << r.mdr << ',' << r.f_score << ',' << r.f_of_means << ',' << r.purity << ','
        << r.coverage << ',' << r.counters.delta_bic_count << ',' << r.counters.t2_count << ','
        << r.counters.covariance_count << '\n';
  }
  out << std::defaultfloat;
}

std::vector<ParadigmRun> compare_paradigms(const SpeakerCorpus& corpus, const ParadigmSetup& setup,
                                           std::uint64_t seed) {
  FederatedConfig base;
  base.num_clients = setup.num_speakers;
  base.rounds = setup.rounds;
  base.local_epochs = setup.local_epochs;
  base.lr0 = setup.lr0;
  base.lr_decay = setup.lr_decay;
  base.batch_size = setup.batch_size;
  base.seed = seed;
  base.mode = FedMode::NonIid;

  std::vector<ParadigmRun> runs;
  FederatedConfig central = base;
  central.mode = FedMode::Centralized;
  central.lr0 = setup.baseline_lr0;
  runs.push_back({"centralized", central, {}});
  FederatedConfig g4 = base;
  g4.group_size = 4;
  runs.push_back({"grouped_g4", g4, {}});
  FederatedConfig g2 = base;
  g2.group_size = 2;
  runs.push_back({"grouped_g2", g2, {}});
  FederatedConfig isolated = base;
  isolated.group_size = 1;
  isolated.lr0 = setup.baseline_lr0;
  runs.push_back({"non_iid_isolated", isolated, {}});

  for (auto& r : runs) r.result = run_federated(corpus.train_by_speaker, corpus.held_out, setup.arch, r.cfg);
  return runs;
}

}  // namespace qsd
