// include/ovr/rtf.hpp

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

#ifndef OVR_RTF_HPP_
#define OVR_RTF_HPP_

#include <map>
#include <string>
#include <vector>

#include "ovr/dsp.hpp"

namespace ovr {

struct Utterance {
  std::size_t start = 0;  // sample index, inclusive
  std::size_t end = 0;    // sample index, exclusive
  std::size_t length() const { return end - start; }
};

struct VadConfig {
  double threshold_db = -30.0;  // re. max frame RMS of the recording
  double frame_s = 0.020;
  double hop_s = 0.010;
  double bridge_gap_s = 0.200;  // gaps shorter than this merge
};

struct RtfEstimate {
  std::vector<cplx> response;       // one-sided, N/2+1 bins
  std::vector<bool> degenerate;     // bins zeroed because outer PSD ~ 0
  std::string source_talker;
  std::string source_utterance;
  std::size_t n_frames = 0;  // Welch frame count L
};

struct ReIR {
  std::vector<double> taps;  // length N (RTF resolution)
  std::string talker;
  std::string utterance;
  std::size_t n_frames = 0;
  std::vector<bool> degenerate;
};

struct ReirBank {
  std::vector<ReIR> entries;
  std::size_t reir_len = 256;
};

// Frame-RMS voice activity detection: frames whose RMS exceeds the
// recording's peak frame RMS minus |threshold_db| are active; adjacent
// active frames merge, and short silent gaps are bridged.
std::vector<Utterance> detect_utterances(const AudioBuffer& buf,
                                         const VadConfig& cfg = {});

// Welch cross-PSD over auto-PSD on the utterance span. Bins with outer
// PSD below 1e-12 * max bin are zeroed and flagged degenerate.
RtfEstimate estimate_rtf(const AudioBuffer& inear, const AudioBuffer& outer,
                         const Utterance& utt, const StftConfig& cfg = {});

// Conjugate-symmetric extension + inverse FFT; asserts the residual
// imaginary energy is below 1e-8 of the total.
ReIR rtf_to_reir(const RtfEstimate& rtf);

enum class RtfMode { kSingle, kMulti };    // s-RTF / m-RTF
enum class TalkerScope { kSingle, kAll };  // 1T / 14T

struct TalkerUtteranceRtfs {
  std::string talker;
  // One estimate per detected utterance, with its length in samples.
  std::vector<std::pair<RtfEstimate, std::size_t>> estimates;
};

// s-RTF: one ReIR per talker from its longest utterance. m-RTF: one
// ReIR per utterance of at least 1 second. kSingle scope keeps only the
// first talker (by input order).
ReirBank select_rtfs(const std::vector<TalkerUtteranceRtfs>& per_talker,
                     RtfMode mode, TalkerScope scope,
                     int sample_rate_hz = kPipelineSampleRate);

// JSON manifest + one float32 WAV per impulse response.
void save_bank(const ReirBank& bank, const std::string& dir);
ReirBank load_bank(const std::string& dir);

}  // namespace ovr

#endif  // OVR_RTF_HPP_
