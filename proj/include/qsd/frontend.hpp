#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "qsd/types.hpp"

namespace qsd {

struct AudioSignal {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate_hz = 16000;
  std::string source_id;

  double duration_sec() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct MfccConfig {
  int num_coefficients = 12;
  int num_mel_filters = 26;
  int fft_size = 0;  // 0 selects the next power of two >= frame length
  double pre_emphasis = 0.97;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double log_floor = 1e-10;
  double low_freq_hz = 0.0;
  double high_freq_hz = 0.0;  // 0 selects Nyquist

  int frame_len_samples(int sample_rate_hz) const;
  int hop_samples(int sample_rate_hz) const;
  int resolved_fft_size(int sample_rate_hz) const;
  double hop_sec() const { return hop_ms / 1000.0; }
  // Throws InvalidConfig when the invariants do not hold at this rate.
  void validate(int sample_rate_hz) const;
};

// Frames are stored contiguously: frame i occupies row i.
struct FrameSequence {
  RowMatrix frames;
  int frame_len_samples = 0;
  int hop_samples = 0;
  int sample_rate_hz = 0;

  Eigen::Index size() const { return frames.rows(); }
  double frame_time_sec(Eigen::Index i) const {
    return static_cast<double>(i * hop_samples) / sample_rate_hz;
  }
};

struct FeatureMatrix {
  RowMatrix rows;
  std::vector<double> frame_times_sec;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
  RowsView slice(Eigen::Index begin, Eigen::Index end) const {
    return rows.middleRows(begin, end - begin);
  }
};

AudioSignal load_wav(const std::filesystem::path& path);
// 16-bit PCM mono; samples are clipped to [-1, 1] before quantization.
void save_wav(const AudioSignal& signal, const std::filesystem::path& path);

FrameSequence frame_signal(const AudioSignal& signal, const MfccConfig& cfg);

// Per-frame magnitude spectrum (fft_size/2 + 1 bins) of the raw frames,
// without pre-emphasis or windowing. Used by the silence stage.
RowMatrix magnitude_spectra(const FrameSequence& frames, const MfccConfig& cfg);

FeatureMatrix compute_mfcc(const FrameSequence& frames, const MfccConfig& cfg);

// Convenience: frame_signal followed by compute_mfcc.
FeatureMatrix extract_features(const AudioSignal& signal, const MfccConfig& cfg);

// CSV with header time_sec,c1..cN.
void write_features_csv(const FeatureMatrix& features, std::ostream& out);

}  // namespace qsd
