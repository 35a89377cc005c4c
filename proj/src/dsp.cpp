// src/dsp.cpp

// Copyright 2026  OVR-Lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ovr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ovr {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void fft(std::vector<cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = x[i + k];
        const cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv_n;
  }
}

std::vector<cplx> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) throw std::invalid_argument("rfft: length must be a power of two");
  std::vector<cplx> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(x[i], 0.0);
  fft(buf);
  buf.resize(n / 2 + 1);
  return buf;
}

std::vector<double> irfft_checked(const std::vector<cplx>& bins, std::size_t n,
                                  double* imag_energy_ratio) {
  if (!is_pow2(n)) throw std::invalid_argument("irfft: length must be a power of two");
  if (bins.size() != n / 2 + 1)
    throw std::invalid_argument("irfft: expected n/2+1 bins");
  std::vector<cplx> buf(n);
  for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = bins[k];
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(bins[n - k]);
  fft(buf, /*inverse=*/true);
  double re2 = 0.0, im2 = 0.0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = buf[i].real();
    re2 += buf[i].real() * buf[i].real();
    im2 += buf[i].imag() * buf[i].imag();
  }
  if (imag_energy_ratio) {
    const double total = re2 + im2;
    *imag_energy_ratio = total > 0.0 ? im2 / total : 0.0;
  }
  return out;
}

std::vector<double> irfft(const std::vector<cplx>& bins, std::size_t n) {
  return irfft_checked(bins, n, nullptr);
}

std::vector<double> make_window(WindowType type, std::size_t n) {
  // Hann is symmetric (zero endpoints); sqrt-Hann is the root of the
  // periodic Hann, whose squares satisfy COLA exactly at 50% overlap.
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (type == WindowType::kHann) {
      w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                  static_cast<double>(n - 1));
    } else {
      const double hann =
          0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                               static_cast<double>(n));
      w[k] = std::sqrt(hann);
    }
  }
  return w;
}

std::vector<std::vector<double>> segment_wola(const AudioBuffer& buf,
                                              const WolaConfig& cfg) {
  if (buf.samples.empty()) throw std::invalid_argument("segment_wola: empty buffer");
  const std::size_t p = cfg.segment_len;
  const std::size_t hop = cfg.hop();
  const auto win = make_window(WindowType::kSqrtHann, p);
  // One segment per hop start below the input length; the tail segment is
  // zero-padded so every sample is covered by two overlapping windows.
  const std::size_t n = buf.samples.size();
  const std::size_t num_segments = (n + hop - 1) / hop;
  std::vector<std::vector<double>> segments(num_segments);
  for (std::size_t l = 0; l < num_segments; ++l) {
    auto& seg = segments[l];
    seg.assign(p, 0.0);
    const std::size_t start = l * hop;
    for (std::size_t m = 0; m < p; ++m) {
      const std::size_t idx = start + m;
      if (idx < n) seg[m] = win[m] * buf.samples[idx];
    }
  }
  return segments;
}

AudioBuffer overlap_add(const std::vector<std::vector<double>>& segments,
                        const WolaConfig& cfg, int sample_rate_hz) {
  const std::size_t p = cfg.segment_len;
  const std::size_t hop = cfg.hop();
  for (const auto& seg : segments)
    if (seg.size() != p)
      throw std::invalid_argument("overlap_add: inconsistent segment length");
  const auto win = make_window(WindowType::kSqrtHann, p);
  AudioBuffer out;
  out.sample_rate_hz = sample_rate_hz;
  if (segments.empty()) return out;
  out.samples.assign((segments.size() - 1) * hop + p, 0.0);
  for (std::size_t l = 0; l < segments.size(); ++l) {
    const std::size_t start = l * hop;
    for (std::size_t m = 0; m < p; ++m)
      out.samples[start + m] += win[m] * segments[l][m];
  }
  return out;
}

Spectrogram stft(const AudioBuffer& buf, const StftConfig& cfg) {
  const std::size_t n = cfg.frame_len;
  if (buf.samples.size() < n)
    throw std::invalid_argument("stft: buffer shorter than one frame");
  const auto win = make_window(cfg.window, n);
  const std::size_t num_frames = (buf.samples.size() - n) / cfg.hop + 1;
  Spectrogram spec;
  spec.config = cfg;
  spec.frames.reserve(num_frames);
  std::vector<double> frame(n);
  for (std::size_t l = 0; l < num_frames; ++l) {
    const std::size_t start = l * cfg.hop;
    for (std::size_t m = 0; m < n; ++m)
      frame[m] = win[m] * buf.samples[start + m];
    spec.frames.push_back(rfft(frame));
  }
  return spec;
}

std::vector<double> welch_psd(const Spectrogram& spec) {
  const std::size_t k = spec.num_bins();
  const std::size_t num_frames = spec.num_frames();
  std::vector<double> psd(k, 0.0);
  for (const auto& frame : spec.frames)
    for (std::size_t i = 0; i < k; ++i) psd[i] += std::norm(frame[i]);
  if (num_frames > 0)
    for (auto& v : psd) v /= static_cast<double>(num_frames);
  return psd;
}

std::vector<cplx> welch_cross_psd(const Spectrogram& a, const Spectrogram& b) {
  if (a.num_frames() != b.num_frames() || a.num_bins() != b.num_bins() ||
      a.config.frame_len != b.config.frame_len || a.config.hop != b.config.hop)
    throw std::invalid_argument("welch_cross_psd: shape/config mismatch");
  const std::size_t k = a.num_bins();
  std::vector<cplx> psd(k, cplx(0.0, 0.0));
  for (std::size_t l = 0; l < a.num_frames(); ++l)
    for (std::size_t i = 0; i < k; ++i)
      psd[i] += a.frames[l][i] * std::conj(b.frames[l][i]);
  if (a.num_frames() > 0)
    for (auto& v : psd) v /= static_cast<double>(a.num_frames());
  return psd;
}

AudioBuffer fir_convolve(const AudioBuffer& signal,
                         const std::vector<double>& taps) {
  if (taps.empty()) throw std::invalid_argument("fir_convolve: empty taps");
  const std::size_t n = signal.samples.size();
  const std::size_t m = taps.size();
  AudioBuffer out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.assign(n, 0.0);
  if (n == 0) return out;
  if (m <= 128) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const std::size_t mmax = std::min(m, i + 1);
      for (std::size_t j = 0; j < mmax; ++j) acc += taps[j] * signal.samples[i - j];
      out.samples[i] = acc;
    }
    return out;
  }
  // Overlap is short relative to typical inputs; a single big FFT keeps
  // the implementation simple for corpus-scale signals.
  const std::size_t full = next_pow2(n + m - 1);
  std::vector<cplx> x(full, cplx(0.0, 0.0)), h(full, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) x[i] = cplx(signal.samples[i], 0.0);
  for (std::size_t j = 0; j < m; ++j) h[j] = cplx(taps[j], 0.0);
  fft(x);
  fft(h);
  for (std::size_t i = 0; i < full; ++i) x[i] *= h[i];
  fft(x, /*inverse=*/true);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = x[i].real();
  return out;
}

}  // namespace ovr
