#include "qsd/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace qsd {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_power_of_two(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::span<std::complex<double>> data) {
  const auto n = data.size();
  if (!is_power_of_two(static_cast<int>(n))) {
    throw std::invalid_argument("fft size must be a power of two");
  }
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

std::vector<double> real_magnitude_spectrum(std::span<const double> frame, int n) {
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  const std::size_t m = std::min<std::size_t>(frame.size(), buf.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = frame[i];
  fft_inplace(buf);
  std::vector<double> mag(static_cast<std::size_t>(n / 2 + 1));
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

}  // namespace qsd
