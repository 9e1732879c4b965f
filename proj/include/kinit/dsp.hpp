#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "kinit/error.hpp"

namespace kinit {

// Small dense row-major double matrix, shared by the DSP stages.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  require(is_pow2(static_cast<int>(n)), Errc::BadArgument, "fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> t = a[i + k + len / 2] * w;
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
        w *= wlen;
      }
    }
  }
}

// Periodic Hann window: w[i] = 0.5 - 0.5 cos(2 pi i / n).
inline std::vector<double> hann_periodic(int n) {
  require(n > 0, Errc::BadArgument, "window length must be positive");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank, peak weight 1, evaluated at FFT-bin center
// frequencies. Rows are filters, columns are the fft_size/2 + 1 bins.
inline Mat mel_filterbank_matrix(int n_mels, int fft_size, int sample_rate) {
  require(n_mels >= 1, Errc::BadArgument, "need at least one mel filter");
  require(is_pow2(fft_size), Errc::BadArgument, "fft size must be a power of two");
  require(sample_rate > 0, Errc::BadArgument, "sample rate must be positive");

  const int n_bins = fft_size / 2 + 1;
  const double hz_per_bin = static_cast<double>(sample_rate) / fft_size;
  const double mel_max = hz_to_mel(sample_rate / 2.0);

  std::vector<double> edge_hz(static_cast<std::size_t>(n_mels) + 2);
  for (int j = 0; j < n_mels + 2; ++j) {
    edge_hz[static_cast<std::size_t>(j)] = mel_to_hz(mel_max * j / (n_mels + 1));
  }
  for (int j = 0; j + 1 < n_mels + 2; ++j) {
    const auto bin_lo = static_cast<long>(edge_hz[static_cast<std::size_t>(j)] / hz_per_bin);
    const auto bin_hi = static_cast<long>(edge_hz[static_cast<std::size_t>(j) + 1] / hz_per_bin);
    require(bin_lo != bin_hi, Errc::DegenerateFilter,
            "adjacent mel edges fall on the same FFT bin; fft_size too small for " +
                std::to_string(n_mels) + " filters");
  }

  Mat fb(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edge_hz[static_cast<std::size_t>(m)];
    const double mid = edge_hz[static_cast<std::size_t>(m) + 1];
    const double hi = edge_hz[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * hz_per_bin;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      fb.at(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

// Orthonormal DCT-II: D[i][j] = s_i cos(pi i (2j+1) / (2 n_in)),
// s_0 = sqrt(1/n_in), s_i = sqrt(2/n_in) otherwise.
inline Mat dct_ii_matrix(int n_out, int n_in) {
  require(n_in >= 1 && n_out >= 1, Errc::BadArgument, "dct dimensions must be positive");
  require(n_out <= n_in, Errc::BadArgument, "dct cannot have more outputs than inputs");
  Mat d(n_out, n_in);
  const double s0 = std::sqrt(1.0 / n_in);
  const double s = std::sqrt(2.0 / n_in);
  for (int i = 0; i < n_out; ++i) {
    for (int j = 0; j < n_in; ++j) {
      d.at(i, j) = (i == 0 ? s0 : s) *
                   std::cos(std::numbers::pi * i * (2.0 * j + 1.0) / (2.0 * n_in));
    }
  }
  return d;
}

}  // namespace kinit
