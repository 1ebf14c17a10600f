#include "qsd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qsd/error.hpp"
#include "qsd/random.hpp"

namespace qsd {

namespace {

constexpr double kNominalLevel = 0.1;
constexpr double kRampSec = 0.01;

double profile_distance(const SpeakerProfile& a, const SpeakerProfile& b) {
  return std::abs(a.formant_hz[0] - b.formant_hz[0]) / 550.0 +
         std::abs(a.formant_hz[1] - b.formant_hz[1]) / 1500.0 +
         std::abs(a.formant_hz[2] - b.formant_hz[2]) / 1200.0 +
         std::abs(std::log(a.f0_hz / b.f0_hz)) / std::log(2.7);
}

constexpr double kMinProfileDistance = 0.35;

// Raised-cosine fade applied at both ends of [begin, end).
void apply_ramps(std::vector<double>& x, std::size_t begin, std::size_t end, std::size_t ramp) {
  const std::size_t len = end - begin;
  ramp = std::min(ramp, len / 2);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
    x[begin + i] *= g;
    x[end - 1 - i] *= g;
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (sample_rate_hz <= 0) throw Error(ErrorKind::InvalidSpec, "sample rate must be positive");
  if (turns.empty()) throw Error(ErrorKind::InvalidSpec, "no turns");
  if (gap_sec < 0.0) throw Error(ErrorKind::InvalidSpec, "gap must be non-negative");
  if (static_cast<int>(speaker_profiles.size()) < num_speakers) {
    throw Error(ErrorKind::InvalidSpec, "fewer profiles than speakers");
  }
  for (const auto& t : turns) {
    if (!(t.duration_sec > 0.0)) throw Error(ErrorKind::InvalidSpec, "turn durations must be positive");
    if (t.speaker < 0 || t.speaker >= static_cast<int>(speaker_profiles.size())) {
      throw Error(ErrorKind::InvalidSpec, "turn speaker out of range");
    }
  }
  for (std::size_t i = 0; i < speaker_profiles.size(); ++i) {
    for (std::size_t j = i + 1; j < speaker_profiles.size(); ++j) {
      if (profile_distance(speaker_profiles[i], speaker_profiles[j]) <= 0.0) {
        throw Error(ErrorKind::InvalidSpec, "speaker profiles must be pairwise distinct");
      }
    }
  }
}

std::vector<SpeakerProfile> make_speaker_profiles(int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5be4));
  std::vector<SpeakerProfile> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    SpeakerProfile p;
    p.f0_hz = std::exp(rng.uniform(std::log(85.0), std::log(250.0)));
    p.formant_hz = {rng.uniform(300.0, 850.0), rng.uniform(900.0, 2400.0), rng.uniform(2400.0, 3600.0)};
    p.bandwidth_hz = {rng.uniform(60.0, 140.0), rng.uniform(90.0, 200.0), rng.uniform(120.0, 260.0)};
    p.noise_mix = rng.uniform(0.05, 0.35);
    p.level = kNominalLevel * std::pow(10.0, rng.uniform(-3.0, 3.0) / 20.0);
    // relax the separation requirement if the space gets crowded
    const double min_dist = kMinProfileDistance * std::pow(0.9, attempts / 200);
    const bool distinct = std::all_of(out.begin(), out.end(), [&](const SpeakerProfile& q) {
      return profile_distance(p, q) >= min_dist;
    });
    ++attempts;
    if (distinct) out.push_back(p);
  }
  return out;
}

std::vector<double> synth_voice(const SpeakerProfile& profile, double duration_sec,
                                int sample_rate_hz, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x701c));
  const auto n = static_cast<std::size_t>(std::lround(duration_sec * sample_rate_hz));
  const double sr = sample_rate_hz;
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;

  const double vib_rate = rng.uniform(0.3, 0.8), vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double drift_rate = rng.uniform(0.15, 0.4), drift_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double syl_rate = rng.uniform(3.0, 5.0), syl_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double pulse_gain = std::sqrt(sr / profile.f0_hz);

  // resonator coefficients follow the formant drift every kCoefStride samples
  constexpr std::size_t kCoefStride = 16;
  std::array<double, 3> y1{}, y2{}, a1{}, radius{};
  for (std::size_t k = 0; k < 3; ++k) radius[k] = std::exp(-std::numbers::pi * profile.bandwidth_hz[k] / sr);
  double phase = rng.uniform();
  double jitter = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    jitter = 0.995 * jitter + 0.1 * rng.normal() * 0.1;
    const double f0 = profile.f0_hz *
                      (1.0 + 0.04 * std::sin(2.0 * std::numbers::pi * vib_rate * t + vib_phase)) *
                      (1.0 + 0.01 * jitter);
    phase += f0 / sr;
    double source = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      source = pulse_gain;
    }
    source = (1.0 - profile.noise_mix) * source + profile.noise_mix * rng.normal();

    if (i % kCoefStride == 0) {
      const double drift = 1.0 + 0.04 * std::sin(2.0 * std::numbers::pi * drift_rate * t + drift_phase);
      for (std::size_t k = 0; k < 3; ++k) {
        const double theta = 2.0 * std::numbers::pi * profile.formant_hz[k] * drift / sr;
        a1[k] = 2.0 * radius[k] * std::cos(theta);
      }
    }
    double x = source;
    for (std::size_t k = 0; k < 3; ++k) {
      const double r = radius[k];
      const double y = (1.0 - r) * x + a1[k] * y1[k] - r * r * y2[k];
      y2[k] = y1[k];
      y1[k] = y;
      x = y;
    }
    const double syl = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * syl_rate * t + syl_phase);
    out[i] = x * (0.3 + 0.7 * syl * syl);
  }

  double energy = 0.0;
  for (double v : out) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(n));
  if (rms > 0.0) {
    for (double& v : out) v *= profile.level / rms;
  }
  return out;
}

std::pair<AudioSignal, GroundTruth> synth_conversation(const SynthSpec& spec) {
  spec.validate();
  const double sr = spec.sample_rate_hz;
  Rng rng(derive_seed(spec.seed, 0xc0417));

  // layout: gap, turn, gap, turn, ..., gap
  double total = spec.gap_sec;
  for (const auto& t : spec.turns) total += t.duration_sec + spec.gap_sec;
  const auto n = static_cast<std::size_t>(std::lround(total * sr));

  AudioSignal signal;
  signal.sample_rate_hz = spec.sample_rate_hz;
  signal.source_id = "synth-" + std::to_string(spec.seed);
  signal.samples.assign(n, 0.0);
  GroundTruth truth;

  const auto ramp = static_cast<std::size_t>(std::lround(kRampSec * sr));
  double cursor = spec.gap_sec;
  for (std::size_t k = 0; k < spec.turns.size(); ++k) {
    const auto& turn = spec.turns[k];
    const auto begin = static_cast<std::size_t>(std::lround(cursor * sr));
    auto voice = synth_voice(spec.speaker_profiles[static_cast<std::size_t>(turn.speaker)],
                             turn.duration_sec, spec.sample_rate_hz,
                             derive_seed(spec.seed, 0x7e22, k));
    voice.resize(std::min(voice.size(), n - begin));
    apply_ramps(voice, 0, voice.size(), ramp);

    // intra-turn pauses
    const double usable = turn.duration_sec - 2.0 * spec.pause_margin_sec - spec.pause_sec;
    if (spec.pause_rate_hz > 0.0 && usable > 0.0) {
      const double expected = spec.pause_rate_hz * turn.duration_sec;
      int count = static_cast<int>(expected);
      if (rng.uniform() < expected - count) ++count;
      std::vector<double> starts;
      for (int p = 0; p < count; ++p) starts.push_back(spec.pause_margin_sec + rng.uniform(0.0, usable));
      std::sort(starts.begin(), starts.end());
      double last_end = -1.0;
      for (double s : starts) {
        if (s < last_end + spec.pause_margin_sec) continue;
        const auto pb = static_cast<std::size_t>(std::lround(s * sr));
        const auto pe = std::min(voice.size(), static_cast<std::size_t>(std::lround((s + spec.pause_sec) * sr)));
        // fade out before and in after the pause
        for (std::size_t i = 0; i < ramp && pb >= i + 1; ++i) {
          voice[pb - 1 - i] *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
        }
        for (std::size_t i = 0; i < ramp && pe + i < voice.size(); ++i) {
          voice[pe + i] *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
        }
        std::fill(voice.begin() + static_cast<long>(pb), voice.begin() + static_cast<long>(pe), 0.0);
        truth.pauses.push_back({cursor + s, cursor + s + spec.pause_sec, turn.speaker});
        last_end = s + spec.pause_sec;
      }
    }
    std::copy(voice.begin(), voice.end(), signal.samples.begin() + static_cast<long>(begin));
    truth.turns.push_back({cursor, cursor + turn.duration_sec, turn.speaker});
    if (k + 1 < spec.turns.size() && spec.turns[k + 1].speaker != turn.speaker) {
      truth.change_points_sec.push_back(cursor + turn.duration_sec + spec.gap_sec / 2.0);
    }
    cursor += turn.duration_sec + spec.gap_sec;
  }

  const double floor_rms = kNominalLevel * std::pow(10.0, spec.noise_floor_db / 20.0);
  for (double& v : signal.samples) v += floor_rms * rng.normal();
  return {std::move(signal), std::move(truth)};
}

SynthSpec draw_conversation(const std::vector<SpeakerProfile>& bank, std::uint64_t seed,
                            const ConversationDraw& draw) {
  if (bank.size() < 2) throw Error(ErrorKind::InvalidSpec, "speaker bank needs >= 2 profiles");
  Rng rng(derive_seed(seed, 0xd4a3));
  SynthSpec spec;
  spec.seed = seed;
  spec.speaker_profiles = bank;
  spec.num_speakers = static_cast<int>(bank.size());
  spec.gap_sec = rng.uniform(draw.gap_min_sec, draw.gap_max_sec);
  spec.pause_rate_hz = draw.pause_rate_hz;
  spec.pause_sec = rng.uniform(draw.pause_min_sec, draw.pause_max_sec);

  const int max_speakers = std::min<int>(draw.max_speakers, static_cast<int>(bank.size()));
  const int k = draw.min_speakers + static_cast<int>(rng.below(
                                        static_cast<std::uint64_t>(max_speakers - draw.min_speakers + 1)));
  std::vector<int> ids(bank.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(ids));
  ids.resize(static_cast<std::size_t>(k));

  const int turns = draw.min_turns +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(draw.max_turns - draw.min_turns + 1)));
  int prev = -1;
  for (int t = 0; t < turns; ++t) {
    int who;
    do {
      who = ids[rng.below(ids.size())];
    } while (who == prev);
    prev = who;
    spec.turns.push_back({who, rng.uniform(draw.min_turn_sec, draw.max_turn_sec)});
  }
  return spec;
}

std::vector<int> frame_labels(const GroundTruth& truth, Eigen::Index num_frames, double hop_sec,
                              double frame_sec) {
  std::vector<int> labels(static_cast<std::size_t>(num_frames), -1);
  for (Eigen::Index i = 0; i < num_frames; ++i) {
    const double t = static_cast<double>(i) * hop_sec + frame_sec / 2.0;
    for (const auto& turn : truth.turns) {
      if (t >= turn.start_sec && t < turn.end_sec) {
        labels[static_cast<std::size_t>(i)] = turn.speaker;
        break;
      }
    }
  }
  return labels;
}

SpeakerCorpus make_speaker_corpus(const std::vector<SpeakerProfile>& profiles,
                                  double seconds_per_speaker, std::uint64_t seed,
                                  const MfccConfig& mfcc, double held_out_fraction) {
  SpeakerCorpus corpus;
  std::vector<LabeledFrames> held;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    AudioSignal audio;
    audio.sample_rate_hz = 16000;
    audio.samples = synth_voice(profiles[k], seconds_per_speaker, audio.sample_rate_hz,
                                derive_seed(seed, 0xc0a9, k));
    Rng rng(derive_seed(seed, 0xf100, k));
    const double floor_rms = kNominalLevel * 1e-4;
    for (double& v : audio.samples) v += floor_rms * rng.normal();
    const FeatureMatrix f = extract_features(audio, mfcc);
    const Eigen::Index n = f.size();
    const auto n_train = static_cast<Eigen::Index>(std::lround((1.0 - held_out_fraction) * n));
    LabeledFrames train{f.rows.topRows(n_train), std::vector<int>(static_cast<std::size_t>(n_train), static_cast<int>(k))};
    LabeledFrames test{f.rows.bottomRows(n - n_train),
                       std::vector<int>(static_cast<std::size_t>(n - n_train), static_cast<int>(k))};
    corpus.train_by_speaker.push_back(std::move(train));
    held.push_back(std::move(test));
  }
  corpus.held_out = concat(held);
  return corpus;
}

}  // namespace qsd
