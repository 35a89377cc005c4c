// src/rtf.cpp

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

#include "ovr/rtf.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ovr {

std::vector<Utterance> detect_utterances(const AudioBuffer& buf,
                                         const VadConfig& cfg) {
  if (buf.samples.empty())
    throw std::invalid_argument("detect_utterances: empty buffer");
  const std::size_t frame_len =
      static_cast<std::size_t>(std::lround(cfg.frame_s * buf.sample_rate_hz));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(cfg.hop_s * buf.sample_rate_hz));
  const std::size_t n = buf.samples.size();
  if (n < frame_len) return {};

  const std::size_t num_frames = (n - frame_len) / hop + 1;
  std::vector<double> rms(num_frames);
  double peak_rms = 0.0;
  for (std::size_t f = 0; f < num_frames; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < frame_len; ++i) {
      const double s = buf.samples[f * hop + i];
      e += s * s;
    }
    rms[f] = std::sqrt(e / static_cast<double>(frame_len));
    peak_rms = std::max(peak_rms, rms[f]);
  }
  if (peak_rms == 0.0) return {};

  const double threshold = peak_rms * std::pow(10.0, cfg.threshold_db / 20.0);
  std::vector<bool> active(num_frames);
  for (std::size_t f = 0; f < num_frames; ++f) active[f] = rms[f] >= threshold;

  // Merge runs of active frames into sample-indexed utterances.
  std::vector<Utterance> utterances;
  std::size_t f = 0;
  while (f < num_frames) {
    if (!active[f]) {
      ++f;
      continue;
    }
    std::size_t first = f;
    while (f < num_frames && active[f]) ++f;
    const std::size_t last = f - 1;
    utterances.push_back(
        {first * hop, std::min(last * hop + frame_len, n)});
  }

  // Bridge short silent gaps.
  const std::size_t max_gap =
      static_cast<std::size_t>(std::lround(cfg.bridge_gap_s * buf.sample_rate_hz));
  std::vector<Utterance> merged;
  for (const auto& u : utterances) {
    if (!merged.empty() && u.start < merged.back().end + max_gap)
      merged.back().end = u.end;
    else
      merged.push_back(u);
  }
  return merged;
}

RtfEstimate estimate_rtf(const AudioBuffer& inear, const AudioBuffer& outer,
                         const Utterance& utt, const StftConfig& cfg) {
  if (utt.end > inear.samples.size() || utt.end > outer.samples.size() ||
      utt.end <= utt.start)
    throw std::invalid_argument("estimate_rtf: utterance out of range");
  const std::size_t len = utt.length();
  if (len < cfg.frame_len + cfg.hop)
    throw std::invalid_argument("estimate_rtf: utterance shorter than 2 frames");

  AudioBuffer in_span{{inear.samples.begin() + static_cast<std::ptrdiff_t>(utt.start),
                       inear.samples.begin() + static_cast<std::ptrdiff_t>(utt.end)},
                      inear.sample_rate_hz};
  AudioBuffer out_span{{outer.samples.begin() + static_cast<std::ptrdiff_t>(utt.start),
                        outer.samples.begin() + static_cast<std::ptrdiff_t>(utt.end)},
                       outer.sample_rate_hz};
  double out_energy = 0.0;
  for (double s : out_span.samples) out_energy += s * s;
  if (out_energy == 0.0)
    throw std::invalid_argument("estimate_rtf: outer signal is silent");

  const Spectrogram spec_in = stft(in_span, cfg);
  const Spectrogram spec_out = stft(out_span, cfg);
  const auto cross = welch_cross_psd(spec_in, spec_out);
  const auto autop = welch_psd(spec_out);

  const double max_auto = *std::max_element(autop.begin(), autop.end());
  const double eps = 1e-12 * max_auto;

  RtfEstimate est;
  est.n_frames = spec_in.num_frames();
  est.response.resize(cross.size());
  est.degenerate.assign(cross.size(), false);
  for (std::size_t k = 0; k < cross.size(); ++k) {
    if (autop[k] < eps) {
      est.response[k] = cplx(0.0, 0.0);
      est.degenerate[k] = true;
    } else {
      est.response[k] = cross[k] / autop[k];
    }
  }
  return est;
}

ReIR rtf_to_reir(const RtfEstimate& rtf) {
  for (const auto& v : rtf.response)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::invalid_argument("rtf_to_reir: non-finite response");
  const std::size_t n = (rtf.response.size() - 1) * 2;
  double imag_ratio = 0.0;
  ReIR reir;
  reir.taps = irfft_checked(rtf.response, n, &imag_ratio);
  if (imag_ratio >= 1e-8)
    throw std::runtime_error("rtf_to_reir: residual imaginary energy " +
                             std::to_string(imag_ratio));
  reir.talker = rtf.source_talker;
  reir.utterance = rtf.source_utterance;
  reir.n_frames = rtf.n_frames;
  reir.degenerate = rtf.degenerate;
  return reir;
}

ReirBank select_rtfs(const std::vector<TalkerUtteranceRtfs>& per_talker,
                     RtfMode mode, TalkerScope scope, int sample_rate_hz) {
  if (per_talker.empty())
    throw std::invalid_argument("select_rtfs: no talkers");
  const std::size_t num_talkers =
      scope == TalkerScope::kSingle ? 1 : per_talker.size();
  const std::size_t min_len =
      static_cast<std::size_t>(sample_rate_hz);  // 1 second

  ReirBank bank;
  for (std::size_t t = 0; t < num_talkers; ++t) {
    const auto& talker = per_talker[t];
    if (talker.estimates.empty())
      throw std::invalid_argument("select_rtfs: talker " + talker.talker +
                                  " has no utterances");
    if (mode == RtfMode::kSingle) {
      const auto longest = std::max_element(
          talker.estimates.begin(), talker.estimates.end(),
          [](const auto& a, const auto& b) { return a.second < b.second; });
      bank.entries.push_back(rtf_to_reir(longest->first));
    } else {
      bool any = false;
      for (const auto& [est, len] : talker.estimates) {
        if (len >= min_len) {
          bank.entries.push_back(rtf_to_reir(est));
          any = true;
        }
      }
      if (!any)
        throw std::invalid_argument("select_rtfs: talker " + talker.talker +
                                    " has no utterance of at least 1 s");
    }
  }
  if (!bank.entries.empty()) bank.reir_len = bank.entries.front().taps.size();
  return bank;
}

void save_bank(const ReirBank& bank, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = 1;
  manifest["reir_len"] = bank.reir_len;
  auto& entries = manifest["entries"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const auto& r = bank.entries[i];
    const std::string file = "reir_" + std::to_string(i) + ".wav";
    AudioBuffer buf{r.taps, kPipelineSampleRate};
    write_wav((fs::path(dir) / file).string(), buf, WavFormat::kFloat32);
    std::vector<int> degenerate_bins;
    for (std::size_t k = 0; k < r.degenerate.size(); ++k)
      if (r.degenerate[k]) degenerate_bins.push_back(static_cast<int>(k));
    entries.push_back({{"file", file},
                       {"talker", r.talker},
                       {"utterance", r.utterance},
                       {"n_frames", r.n_frames},
                       {"degenerate_bins", degenerate_bins}});
  }
  std::ofstream out(fs::path(dir) / "bank.json");
  out << manifest.dump(2) << "\n";
}

ReirBank load_bank(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "bank.json");
  if (!in) throw std::runtime_error("load_bank: missing bank.json in " + dir);
  nlohmann::json manifest;
  in >> manifest;
  ReirBank bank;
  bank.reir_len = manifest.at("reir_len").get<std::size_t>();
  for (const auto& e : manifest.at("entries")) {
    ReIR r;
    const AudioBuffer buf =
        read_wav((fs::path(dir) / e.at("file").get<std::string>()).string());
    r.taps = buf.samples;
    r.talker = e.at("talker").get<std::string>();
    r.utterance = e.at("utterance").get<std::string>();
    r.n_frames = e.at("n_frames").get<std::size_t>();
    r.degenerate.assign(bank.reir_len / 2 + 1, false);
    for (const auto& k : e.at("degenerate_bins"))
      r.degenerate[k.get<std::size_t>()] = true;
    bank.entries.push_back(std::move(r));
  }
  return bank;
}

}  // namespace ovr
