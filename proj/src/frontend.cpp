#include "qsd/frontend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "qsd/error.hpp"
#include "qsd/fft.hpp"

namespace qsd {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over the magnitude bins, one row per filter.
RowMatrix mel_filterbank(const MfccConfig& cfg, int sample_rate_hz, int fft_size) {
  const int bins = fft_size / 2 + 1;
  const double nyquist = sample_rate_hz / 2.0;
  const double lo = hz_to_mel(cfg.low_freq_hz);
  const double hi = hz_to_mel(cfg.high_freq_hz > 0.0 ? cfg.high_freq_hz : nyquist);
  std::vector<double> edges(static_cast<std::size_t>(cfg.num_mel_filters + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(cfg.num_mel_filters + 1));
  }
  RowMatrix bank = RowMatrix::Zero(cfg.num_mel_filters, bins);
  for (int m = 0; m < cfg.num_mel_filters; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / fft_size;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      bank(m, k) = w;
    }
  }
  return bank;
}

// Orthonormal DCT-II rows for coefficients 1..num_coefficients.
RowMatrix dct_rows(int num_coefficients, int num_filters) {
  RowMatrix dct(num_coefficients, num_filters);
  const double scale = std::sqrt(2.0 / num_filters);
  for (int c = 1; c <= num_coefficients; ++c) {
    for (int m = 0; m < num_filters; ++m) {
      dct(c - 1, m) =
          scale * std::cos(std::numbers::pi * c * (m + 0.5) / static_cast<double>(num_filters));
    }
  }
  return dct;
}

}  // namespace

int MfccConfig::frame_len_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(frame_ms * sample_rate_hz / 1000.0));
}

int MfccConfig::hop_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

int MfccConfig::resolved_fft_size(int sample_rate_hz) const {
  return fft_size > 0 ? fft_size : next_power_of_two(frame_len_samples(sample_rate_hz));
}

void MfccConfig::validate(int sample_rate_hz) const {
  if (sample_rate_hz <= 0) throw Error(ErrorKind::InvalidConfig, "sample rate must be positive");
  if (num_coefficients < 1 || num_coefficients > num_mel_filters) {
    throw Error(ErrorKind::InvalidConfig, "need 1 <= num_coefficients <= num_mel_filters");
  }
  const int flen = frame_len_samples(sample_rate_hz);
  const int hop = hop_samples(sample_rate_hz);
  if (flen < 2 || hop < 1 || hop > flen) {
    throw Error(ErrorKind::InvalidConfig, "frame geometry requires 1 <= hop <= frame length");
  }
  const int n = resolved_fft_size(sample_rate_hz);
  if (!is_power_of_two(n) || n < flen) {
    throw Error(ErrorKind::InvalidConfig, "fft_size must be a power of two >= frame length");
  }
  if (pre_emphasis < 0.0 || pre_emphasis >= 1.0) {
    throw Error(ErrorKind::InvalidConfig, "pre_emphasis must lie in [0, 1)");
  }
  if (!(log_floor > 0.0)) throw Error(ErrorKind::InvalidConfig, "log_floor must be positive");
}

AudioSignal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::MalformedWav, "missing RIFF/WAVE header in " + path.string());
  }

  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) {
      // Some writers leave a bogus size on the final data chunk.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw Error(ErrorKind::MalformedWav, "chunk overruns file");
      }
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(ErrorKind::MalformedWav, "fmt chunk too short");
      std::uint16_t format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = static_cast<int>(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 40) format = read_u16(chunk + 8 + 24);
      if (format != 1) throw Error(ErrorKind::UnsupportedEncoding, "only PCM is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos += 8 + size + (size & 1u);
  }
  if (!have_fmt || data == nullptr) throw Error(ErrorKind::MalformedWav, "missing fmt or data chunk");
  if (bits != 16) throw Error(ErrorKind::UnsupportedEncoding, "only 16-bit samples are supported");
  if (channels < 1 || channels > 2) {
    throw Error(ErrorKind::UnsupportedEncoding, "only mono or stereo is supported");
  }
  if (rate <= 0) throw Error(ErrorKind::MalformedWav, "sample rate must be positive");

  AudioSignal signal;
  signal.sample_rate_hz = rate;
  signal.source_id = path.stem().string();
  const std::size_t frame_bytes = 2u * static_cast<std::size_t>(channels);
  const std::size_t count = data_len / frame_bytes;
  signal.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(read_u16(data + i * frame_bytes + 2 * c));
      acc += raw / 32768.0;
    }
    signal.samples[i] = acc / channels;
  }
  return signal;
}

void save_wav(const AudioSignal& signal, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(signal.samples.size());
  out.write("RIFF", 4);
  put_u32(out, 36 + 2 * n);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, 2 * n);
  for (double s : signal.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(
        std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

FrameSequence frame_signal(const AudioSignal& signal, const MfccConfig& cfg) {
  cfg.validate(signal.sample_rate_hz);
  const int flen = cfg.frame_len_samples(signal.sample_rate_hz);
  const int hop = cfg.hop_samples(signal.sample_rate_hz);
  const auto len = static_cast<long>(signal.samples.size());
  if (len < flen) {
    throw Error(ErrorKind::SignalTooShort, "signal has " + std::to_string(len) +
                                               " samples, frame needs " + std::to_string(flen));
  }
  const long count = (len - flen) / hop + 1;
  FrameSequence seq;
  seq.frame_len_samples = flen;
  seq.hop_samples = hop;
  seq.sample_rate_hz = signal.sample_rate_hz;
  seq.frames.resize(count, flen);
  for (long i = 0; i < count; ++i) {
    for (int j = 0; j < flen; ++j) seq.frames(i, j) = signal.samples[i * hop + j];
  }
  return seq;
}

RowMatrix magnitude_spectra(const FrameSequence& frames, const MfccConfig& cfg) {
  const int n = cfg.resolved_fft_size(frames.sample_rate_hz);
  RowMatrix out(frames.size(), n / 2 + 1);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    const auto row = frames.frames.row(i);
    const auto mag = real_magnitude_spectrum(std::span<const double>(row.data(), row.size()), n);
    for (std::size_t k = 0; k < mag.size(); ++k) out(i, static_cast<Eigen::Index>(k)) = mag[k];
  }
  return out;
}

FeatureMatrix compute_mfcc(const FrameSequence& frames, const MfccConfig& cfg) {
  cfg.validate(frames.sample_rate_hz);
  const int n = cfg.resolved_fft_size(frames.sample_rate_hz);
  const int flen = frames.frame_len_samples;
  const RowMatrix bank = mel_filterbank(cfg, frames.sample_rate_hz, n);
  const RowMatrix dct = dct_rows(cfg.num_coefficients, cfg.num_mel_filters);
  std::vector<double> window(static_cast<std::size_t>(flen));
  for (int j = 0; j < flen; ++j) {
    window[j] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * j / (flen - 1));
  }

  FeatureMatrix features;
  features.rows.resize(frames.size(), cfg.num_coefficients);
  features.frame_times_sec.resize(static_cast<std::size_t>(frames.size()));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    std::vector<double> buf(static_cast<std::size_t>(flen));
    const auto row = frames.frames.row(i);
    buf[0] = row(0) * (1.0 - cfg.pre_emphasis) * window[0];
    for (int j = 1; j < flen; ++j) buf[j] = (row(j) - cfg.pre_emphasis * row(j - 1)) * window[j];
    const auto mag = real_magnitude_spectrum(buf, n);
    const Eigen::Map<const Vector> spectrum(mag.data(), static_cast<Eigen::Index>(mag.size()));
    Vector logmel = bank * spectrum;
    for (Eigen::Index m = 0; m < logmel.size(); ++m) {
      logmel(m) = std::log(std::max(logmel(m), cfg.log_floor));
    }
    features.rows.row(i) = (dct * logmel).transpose();
    features.frame_times_sec[static_cast<std::size_t>(i)] = frames.frame_time_sec(i);
  }
  return features;
}

FeatureMatrix extract_features(const AudioSignal& signal, const MfccConfig& cfg) {
  return compute_mfcc(frame_signal(signal, cfg), cfg);
}

void write_features_csv(const FeatureMatrix& features, std::ostream& out) {
  out << "time_sec";
  for (Eigen::Index c = 0; c < features.dim(); ++c) out << ",c" << (c + 1);
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    out << features.frame_times_sec[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < features.dim(); ++c) out << ',' << features.rows(i, c);
    out << '\n';
  }
}

}  // namespace qsd
