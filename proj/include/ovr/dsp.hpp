// include/ovr/dsp.hpp

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

#ifndef OVR_DSP_HPP_
#define OVR_DSP_HPP_

#include <complex>
#include <cstddef>
#include <vector>

#include "ovr/audio_io.hpp"

namespace ovr {

using cplx = std::complex<double>;

// In-place radix-2 complex FFT. Length must be a power of two.
void fft(std::vector<cplx>& x, bool inverse = false);

// One-sided real FFT: length-n real input -> n/2+1 complex bins.
std::vector<cplx> rfft(const std::vector<double>& x);

// Inverse of rfft: n/2+1 bins -> length-n real signal. Discards any
// residual imaginary part; callers that care should use irfft_checked.
std::vector<double> irfft(const std::vector<cplx>& bins, std::size_t n);

// As irfft, but also reports the ratio of imaginary to total energy
// before the real part is taken.
std::vector<double> irfft_checked(const std::vector<cplx>& bins, std::size_t n,
                                  double* imag_energy_ratio);

enum class WindowType { kHann, kSqrtHann };

// Periodic window of length n (hann: 0.5 - 0.5 cos(2 pi k / n)).
std::vector<double> make_window(WindowType type, std::size_t n);

struct WolaConfig {
  std::size_t segment_len = 2048;  // P, even power of two
  std::size_t hop() const { return segment_len / 2; }
};

struct StftConfig {
  std::size_t frame_len = 256;  // N, even power of two
  std::size_t hop = 128;
  WindowType window = WindowType::kHann;
  std::size_t num_bins() const { return frame_len / 2 + 1; }
};

struct Spectrogram {
  // bins[l][k], frame-major; each frame holds num_bins() entries.
  std::vector<std::vector<cplx>> frames;
  StftConfig config;
  std::size_t num_frames() const { return frames.size(); }
  std::size_t num_bins() const { return config.num_bins(); }
};

// Sqrt-Hann analysis windowing at 50% overlap. Segment l covers samples
// [l*P/2, l*P/2 + P); the tail is zero-padded. Throws on empty input.
std::vector<std::vector<double>> segment_wola(const AudioBuffer& buf,
                                              const WolaConfig& cfg);

// Sqrt-Hann synthesis windowing and 50% overlap-add. Inverse of
// segment_wola on interior samples (COLA at 50% overlap).
AudioBuffer overlap_add(const std::vector<std::vector<double>>& segments,
                        const WolaConfig& cfg, int sample_rate_hz);

// One-sided STFT; frame l covers samples [l*hop, l*hop + N). Frames are
// taken while a full frame fits. Throws if the buffer is shorter than N.
Spectrogram stft(const AudioBuffer& buf, const StftConfig& cfg);

// Welch auto-PSD: mean of |S(k,l)|^2 over frames.
std::vector<double> welch_psd(const Spectrogram& spec);

// Welch cross-PSD: mean of A(k,l) * conj(B(k,l)) over frames.
std::vector<cplx> welch_cross_psd(const Spectrogram& a, const Spectrogram& b);

// Linear convolution truncated to the input length (causal alignment,
// h's time origin at index 0). FFT-based for long kernels.
AudioBuffer fir_convolve(const AudioBuffer& signal,
                         const std::vector<double>& taps);

}  // namespace ovr

#endif  // OVR_DSP_HPP_
