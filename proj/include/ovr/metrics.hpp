// include/ovr/metrics.hpp

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

#ifndef OVR_METRICS_HPP_
#define OVR_METRICS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "ovr/audio_io.hpp"

namespace ovr {

struct LsdConfig {
  std::size_t frame_len = 2048;
  std::size_t hop = 1024;      // 50% overlap
  double floor_eps = 1e-10;    // spectral floor before the log
  bool power_spectra = false;  // false: 20*log10 on magnitudes
};

// Frame-averaged RMS log-magnitude-ratio in dB. Symmetric in its
// arguments. Throws on length mismatch or inputs shorter than a frame.
double lsd(const AudioBuffer& reference, const AudioBuffer& estimate,
           const LsdConfig& cfg = {});

// Short-time objective intelligibility. Internally resamples to 10 kHz,
// removes silent frames (40 dB range re. the loudest reference frame),
// decomposes into 15 third-octave bands from 150 Hz, and averages
// clipped normalized correlations over 384 ms segments.
double stoi(const AudioBuffer& reference, const AudioBuffer& estimate);

struct EvalPair {
  std::string id;
  std::string input_path;
  std::string reference_path;
};

struct PairsManifest {
  std::vector<EvalPair> pairs;
  // Accepts either a plain pairs manifest or a corpus manifest (where
  // simulated files are inputs and clean files are references).
  static PairsManifest load(const std::string& path);
  void save(const std::string& path) const;
};

struct UtteranceScores {
  std::string id;
  double lsd_db = 0.0;
  double stoi = 0.0;
  std::optional<double> pesq_wb;
};

struct EvalReport {
  std::vector<UtteranceScores> per_utterance;
  double mean_lsd_db = 0.0;
  double mean_stoi = 0.0;
  std::optional<double> mean_pesq_wb;
  std::string condition_label;

  void save_json(const std::string& path) const;
  std::string to_table() const;
};

class Reconstructor;  // forward; defined in unet.hpp

// Evaluates every (input, reference) pair of the manifest, cutting
// signals to the first 10 seconds. When a reconstructor is supplied the
// inputs are processed through it first, otherwise the unprocessed
// inputs are scored. pesq_scores optionally maps pair ids to externally
// computed PESQ-WB values.
EvalReport evaluate_pairs(
    const PairsManifest& manifest, const Reconstructor* reconstructor = nullptr,
    const std::string& condition_label = "unprocessed",
    const std::vector<std::pair<std::string, double>>* pesq_scores = nullptr);

}  // namespace ovr

#endif  // OVR_METRICS_HPP_
