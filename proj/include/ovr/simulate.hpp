// include/ovr/simulate.hpp

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

#ifndef OVR_SIMULATE_HPP_
#define OVR_SIMULATE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ovr/rtf.hpp"

namespace ovr {

struct SimConfig {
  std::string bank_dir;
  TalkerScope talker_scope = TalkerScope::kAll;
  std::vector<std::string> noise_files;  // empty => no-noise condition
  double snr_low_db = 10.0;
  double snr_high_db = 60.0;
  uint64_t seed = 0;
};

struct CorpusEntry {
  std::string clean_path;
  std::string simulated_path;
  std::string reir_id;
  std::string talker_id;
  std::optional<std::string> noise_id;
  std::optional<double> snr_db;
  std::optional<std::size_t> noise_offset;
  std::string split;  // "train" or "val"
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;
  uint64_t seed = 0;
  double train_fraction = 0.88;

  void save(const std::string& path) const;
  static CorpusManifest load(const std::string& path);
};

// Scale factor alpha for the noise so that the mixture SNR between the
// convolved speech and alpha*noise equals target_snr_db (mean power over
// the full utterance). Throws on silent speech or noise.
double snr_scale(const AudioBuffer& speech, const AudioBuffer& noise,
                 double target_snr_db);

// fir_convolve(clean, reir) + alpha * noise segment. Noise shorter than
// the speech is looped circularly starting at noise_offset.
AudioBuffer simulate_inear(const AudioBuffer& clean, const ReIR& reir,
                           const AudioBuffer* noise = nullptr,
                           double snr_db = 0.0, std::size_t noise_offset = 0);

// Materializes one simulated file per clean utterance in speech_dir.
// All draws (ReIR, noise, offset, SNR, split) come from the seeded RNG
// in a fixed sequential order, so the result is a pure function of
// (speech set, bank, cfg).
CorpusManifest build_corpus(const std::string& speech_dir, const SimConfig& cfg,
                            const std::string& out_dir);

}  // namespace ovr

#endif  // OVR_SIMULATE_HPP_
