// include/ovr/audio_io.hpp

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

#ifndef OVR_AUDIO_IO_HPP_
#define OVR_AUDIO_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace ovr {

inline constexpr int kPipelineSampleRate = 16000;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = kPipelineSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;  // > 0
};

enum class WavFormat { kPcm16, kFloat32 };

// Reads one channel of a PCM16 or float32 RIFF WAV. Integer samples are
// scaled to [-1, 1) by 1/32768. Rejects any sample rate other than 16 kHz.
AudioBuffer read_wav(const std::string& path, int channel = 0);

// Writes a mono WAV. Float32 round-trips bit-exactly through read_wav.
void write_wav(const std::string& path, const AudioBuffer& buf,
               WavFormat format = WavFormat::kFloat32);

// Zero-mean unit-variance scaling (population variance). Throws on
// buffers shorter than 2 samples or constant signals.
std::pair<AudioBuffer, NormalizationStats> normalize_zscore(
    const AudioBuffer& buf);

AudioBuffer denormalize(const AudioBuffer& buf, const NormalizationStats& s);

}  // namespace ovr

#endif  // OVR_AUDIO_IO_HPP_
