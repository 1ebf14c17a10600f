#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qsd/frontend.hpp"
#include "qsd/identifier.hpp"

namespace qsd {

// Source-filter voice: a jittered glottal pulse train plus aspiration noise
// through three cascaded resonators.
struct SpeakerProfile {
  double f0_hz = 120.0;
  std::array<double, 3> formant_hz{500.0, 1500.0, 2500.0};
  std::array<double, 3> bandwidth_hz{80.0, 120.0, 180.0};
  double noise_mix = 0.2;
  double level = 0.1;  // turn RMS
};

struct Turn {
  int speaker = 0;
  double duration_sec = 2.0;
};

struct SynthSpec {
  int num_speakers = 2;
  std::vector<Turn> turns;
  double gap_sec = 0.5;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 0;
  std::vector<SpeakerProfile> speaker_profiles;
  double noise_floor_db = -80.0;     // relative to the speech level
  double pause_rate_hz = 0.0;        // intra-turn pauses per second of speech
  double pause_sec = 0.3;
  double pause_margin_sec = 0.8;     // no pause closer than this to a turn edge

  void validate() const;
};

struct LabeledInterval {
  double start_sec = 0.0;
  double end_sec = 0.0;
  int speaker = 0;
};

struct GroundTruth {
  std::vector<double> change_points_sec;
  std::vector<LabeledInterval> turns;
  std::vector<LabeledInterval> pauses;  // intra-turn pauses
};

// `count` pairwise-distinct profiles drawn from a seeded generator.
std::vector<SpeakerProfile> make_speaker_profiles(int count, std::uint64_t seed);

// Renders `duration_sec` of continuous speech for one profile.
std::vector<double> synth_voice(const SpeakerProfile& profile, double duration_sec,
                                int sample_rate_hz, std::uint64_t seed);

std::pair<AudioSignal, GroundTruth> synth_conversation(const SynthSpec& spec);

struct ConversationDraw {
  int min_turns = 4;    // 3 change points
  int max_turns = 21;   // 20 change points
  double min_turn_sec = 2.0;
  double max_turn_sec = 4.5;
  int min_speakers = 2;
  int max_speakers = 4;
  double gap_min_sec = 0.3;
  double gap_max_sec = 0.6;
  double pause_rate_hz = 0.06;
  double pause_min_sec = 0.15;
  double pause_max_sec = 0.3;
};

// Random conversation over a shared speaker bank; consecutive turns always
// change speaker. Speaker ids in the result index into `bank`.
SynthSpec draw_conversation(const std::vector<SpeakerProfile>& bank, std::uint64_t seed,
                            const ConversationDraw& draw = {});

// Speaker label of each frame from the turn intervals (-1 outside turns).
std::vector<int> frame_labels(const GroundTruth& truth, Eigen::Index num_frames, double hop_sec,
                              double frame_sec);

struct SpeakerCorpus {
  std::vector<LabeledFrames> train_by_speaker;
  LabeledFrames held_out;
};

// Continuous speech per speaker turned into MFCC frames; the last
// `held_out_fraction` of every speaker's frames forms the held-out set.
SpeakerCorpus make_speaker_corpus(const std::vector<SpeakerProfile>& profiles,
                                  double seconds_per_speaker, std::uint64_t seed,
                                  const MfccConfig& mfcc = {}, double held_out_fraction = 0.2);

}  // namespace qsd
