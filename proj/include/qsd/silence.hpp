#pragma once

#include <ostream>
#include <vector>

#include "qsd/frontend.hpp"

namespace qsd {

struct NoiseProfile {
  std::vector<double> magnitude_spectrum_estimate;  // one entry per FFT bin
  int frames_used = 0;
};

struct QuasiSilenceRegion {
  Eigen::Index start_frame = 0;
  Eigen::Index end_frame = 0;  // inclusive
  double mean_energy_db = 0.0;

  Eigen::Index length() const { return end_frame - start_frame + 1; }
  Eigen::Index midpoint() const { return (start_frame + end_frame) / 2; }
};

struct SilenceConfig {
  double threshold_db = 60.0;
  int min_region_frames = 10;
  double noise_percentile = 0.1;
  double peak_percentile = 0.95;
  double energy_floor = 1e-12;

  void validate() const;
};

// Noise estimate from the quietest noise_percentile fraction of frames,
// ranked by raw spectral energy. `spectra` has one row per frame.
NoiseProfile estimate_noise_profile(const RowMatrix& spectra, const SilenceConfig& cfg);
NoiseProfile estimate_noise_profile(const FrameSequence& frames, const SilenceConfig& cfg,
                                    const MfccConfig& mfcc = {});

// Mean squared residual magnitude per frame after subtracting the noise
// magnitude and flooring at zero.
std::vector<double> spectral_subtract(const RowMatrix& spectra, const NoiseProfile& noise);
std::vector<double> spectral_subtract(const FrameSequence& frames, const NoiseProfile& noise,
                                      const MfccConfig& mfcc = {});

// Flags frames at least threshold_db below the peak_percentile energy and
// returns maximal runs of at least min_region_frames.
std::vector<QuasiSilenceRegion> detect_quasi_silences(const std::vector<double>& energy,
                                                      const SilenceConfig& cfg);

// The per-frame quasi-silent mask behind detect_quasi_silences (before the
// minimum-run filter).
std::vector<bool> quasi_silent_mask(const std::vector<double>& energy, const SilenceConfig& cfg);

// Full silence stage: spectra, noise estimate, subtraction, detection.
struct SilenceAnalysis {
  std::vector<double> energy;
  std::vector<QuasiSilenceRegion> regions;
  std::vector<bool> silent;  // per frame, true inside a region
};
SilenceAnalysis analyze_silence(const FrameSequence& frames, const SilenceConfig& cfg,
                                const MfccConfig& mfcc);

// CSV start_sec,end_sec,mean_energy_db.
void write_regions_csv(const std::vector<QuasiSilenceRegion>& regions, double hop_sec,
                       double frame_sec, std::ostream& out);

}  // namespace qsd
