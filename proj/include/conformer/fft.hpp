#pragma once

#include <complex>
#include <vector>

namespace conformer::num {

using cplx = std::complex<double>;

// In-place DFT of arbitrary length (iterative radix-2 for powers of two,
// Bluestein otherwise). `inverse` applies the 1/N factor.
void fft(std::vector<cplx>& a, bool inverse);

// Real-input FFT returning the L/2+1 non-redundant bins.
std::vector<cplx> rfft(const std::vector<double>& x);

// Inverse of rfft for a length-L real signal.
std::vector<double> irfft(const std::vector<cplx>& spec, int L);

}  // namespace conformer::num
