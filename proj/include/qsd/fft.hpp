#pragma once

#include <complex>
#include <span>
#include <vector>

namespace qsd {

// In-place iterative radix-2 FFT. data.size() must be a power of two.
void fft_inplace(std::span<std::complex<double>> data);

// Magnitudes of the first n/2 + 1 bins of the real input zero-padded to n.
std::vector<double> real_magnitude_spectrum(std::span<const double> frame, int n);

bool is_power_of_two(int n);
int next_power_of_two(int n);

}  // namespace qsd
