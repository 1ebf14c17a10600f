#include "qsd/silence.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "qsd/error.hpp"

namespace qsd {

namespace {

double percentile_of(std::vector<double> values, double q) {
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<long>(idx), values.end());
  return values[idx];
}

}  // namespace

void SilenceConfig::validate() const {
  if (!(threshold_db > 0.0)) throw Error(ErrorKind::InvalidConfig, "threshold_db must be positive");
  if (min_region_frames < 1) throw Error(ErrorKind::InvalidConfig, "min_region_frames must be >= 1");
  if (!(noise_percentile > 0.0 && noise_percentile < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "noise_percentile must lie in (0, 1)");
  }
}

NoiseProfile estimate_noise_profile(const RowMatrix& spectra, const SilenceConfig& cfg) {
  cfg.validate();
  const auto n = spectra.rows();
  if (n < 10) {
    throw Error(ErrorKind::TooFewFrames, "noise estimate needs >= 10 frames, got " + std::to_string(n));
  }
  std::vector<double> energy(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) energy[i] = spectra.row(i).squaredNorm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return energy[a] < energy[b]; });
  const auto used = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::ceil(cfg.noise_percentile * static_cast<double>(n))));
  Vector mean = Vector::Zero(spectra.cols());
  for (Eigen::Index k = 0; k < used; ++k) mean += spectra.row(order[k]).transpose();
  mean /= static_cast<double>(used);

  NoiseProfile profile;
  profile.magnitude_spectrum_estimate.assign(mean.data(), mean.data() + mean.size());
  profile.frames_used = static_cast<int>(used);
  return profile;
}

NoiseProfile estimate_noise_profile(const FrameSequence& frames, const SilenceConfig& cfg,
                                    const MfccConfig& mfcc) {
  if (frames.size() < 10) {
    throw Error(ErrorKind::TooFewFrames,
                "noise estimate needs >= 10 frames, got " + std::to_string(frames.size()));
  }
  return estimate_noise_profile(magnitude_spectra(frames, mfcc), cfg);
}

std::vector<double> spectral_subtract(const RowMatrix& spectra, const NoiseProfile& noise) {
  const auto& profile = noise.magnitude_spectrum_estimate;
  if (static_cast<Eigen::Index>(profile.size()) != spectra.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "noise profile has " + std::to_string(profile.size()) +
                                                  " bins, spectra have " +
                                                  std::to_string(spectra.cols()));
  }
  std::vector<double> energy(static_cast<std::size_t>(spectra.rows()));
  for (Eigen::Index i = 0; i < spectra.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < spectra.cols(); ++k) {
      const double r = std::max(0.0, spectra(i, k) - profile[static_cast<std::size_t>(k)]);
      acc += r * r;
    }
    energy[i] = acc / static_cast<double>(spectra.cols());
  }
  return energy;
}

std::vector<double> spectral_subtract(const FrameSequence& frames, const NoiseProfile& noise,
                                      const MfccConfig& mfcc) {
  return spectral_subtract(magnitude_spectra(frames, mfcc), noise);
}

std::vector<bool> quasi_silent_mask(const std::vector<double>& energy, const SilenceConfig& cfg) {
  cfg.validate();
  std::vector<bool> mask(energy.size(), false);
  if (energy.empty()) return mask;
  const double peak = percentile_of(energy, cfg.peak_percentile);
  // A track with no energy above the floor is silent throughout.
  if (peak <= cfg.energy_floor) {
    mask.assign(energy.size(), true);
    return mask;
  }
  for (std::size_t i = 0; i < energy.size(); ++i) {
    const double snr_db = 10.0 * std::log10(peak / std::max(energy[i], cfg.energy_floor));
    mask[i] = snr_db >= cfg.threshold_db;
  }
  return mask;
}

std::vector<QuasiSilenceRegion> detect_quasi_silences(const std::vector<double>& energy,
                                                      const SilenceConfig& cfg) {
  const auto mask = quasi_silent_mask(energy, cfg);
  std::vector<QuasiSilenceRegion> regions;
  std::size_t i = 0;
  while (i < mask.size()) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double acc = 0.0;
    while (j < mask.size() && mask[j]) acc += energy[j++];
    if (static_cast<int>(j - i) >= cfg.min_region_frames) {
      const double mean = acc / static_cast<double>(j - i);
      regions.push_back({static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1),
                         10.0 * std::log10(std::max(mean, cfg.energy_floor))});
    }
    i = j;
  }
  return regions;
}

SilenceAnalysis analyze_silence(const FrameSequence& frames, const SilenceConfig& cfg,
                                const MfccConfig& mfcc) {
  const RowMatrix spectra = magnitude_spectra(frames, mfcc);
  SilenceAnalysis out;
  out.energy = spectral_subtract(spectra, estimate_noise_profile(spectra, cfg));
  out.regions = detect_quasi_silences(out.energy, cfg);
  out.silent.assign(out.energy.size(), false);
  for (const auto& r : out.regions) {
    for (auto f = r.start_frame; f <= r.end_frame; ++f) out.silent[static_cast<std::size_t>(f)] = true;
  }
  return out;
}

void write_regions_csv(const std::vector<QuasiSilenceRegion>& regions, double hop_sec,
                       double frame_sec, std::ostream& out) {
  out << "start_sec,end_sec,mean_energy_db\n" << std::fixed << std::setprecision(3);
  for (const auto& r : regions) {
    out << r.start_frame * hop_sec << ',' << r.end_frame * hop_sec + frame_sec << ','
        << r.mean_energy_db << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace qsd
