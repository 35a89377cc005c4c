// tests/test_rtf.cpp

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

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include <doctest.h>

using namespace ovr;

namespace {

AudioBuffer white_noise(std::size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  AudioBuffer buf;
  buf.samples.resize(n);
  for (auto& s : buf.samples) s = dist(rng);
  return buf;
}

// Hamming-windowed sinc lowpass, cutoff as a fraction of Nyquist.
std::vector<double> lowpass_taps(std::size_t m, double cutoff) {
  std::vector<double> taps(m);
  const double fc = 0.5 * cutoff;  // cycles per sample
  const double mid = 0.5 * static_cast<double>(m - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double sinc =
        t == 0.0 ? 2.0 * fc
                 : std::sin(2.0 * std::numbers::pi * fc * t) /
                       (std::numbers::pi * t);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi *
                                            static_cast<double>(i) /
                                            static_cast<double>(m - 1));
    taps[i] = sinc * w;
    sum += taps[i];
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

// Smooth exponential-decay lowpass; its gentle rolloff keeps the
// Welch estimate free of transition-band smoothing bias.
std::vector<double> expo_lowpass_taps(std::size_t m, double a) {
  std::vector<double> taps(m);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    taps[i] = std::pow(a, static_cast<double>(i));
    sum += taps[i];
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

// One-sided frequency response of a tap vector at resolution n.
std::vector<cplx> taps_response(const std::vector<double>& taps, std::size_t n) {
  std::vector<double> padded(n, 0.0);
  for (std::size_t i = 0; i < taps.size(); ++i) padded[i] = taps[i];
  return rfft(padded);
}

AudioBuffer tone(std::size_t n, double freq_hz, double amp = 0.5) {
  AudioBuffer buf;
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    buf.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz *
                                    static_cast<double>(i) / 16000.0);
  return buf;
}

}  // namespace

TEST_CASE("vad returns nothing for silence") {
  AudioBuffer buf;
  buf.samples.assign(16000, 0.0);
  CHECK(detect_utterances(buf).empty());
}

TEST_CASE("vad finds a single padded tone within one frame") {
  AudioBuffer buf;
  buf.samples.assign(48000, 0.0);
  const auto t = tone(16000, 440.0);
  for (std::size_t i = 0; i < 16000; ++i) buf.samples[16000 + i] = t.samples[i];
  const auto utts = detect_utterances(buf);
  REQUIRE(utts.size() == 1);
  const std::size_t frame = 320;  // 20 ms at 16 kHz
  CHECK(utts[0].start >= 16000 - frame);
  CHECK(utts[0].start <= 16000 + frame);
  CHECK(utts[0].end >= 32000 - frame);
  CHECK(utts[0].end <= 32000 + frame);
}

TEST_CASE("vad splits bursts separated by half a second") {
  AudioBuffer buf;
  buf.samples.assign(40000, 0.0);
  const auto t = tone(8000, 300.0);
  for (std::size_t i = 0; i < 8000; ++i) {
    buf.samples[4000 + i] = t.samples[i];
    buf.samples[4000 + 8000 + 8000 + i] = t.samples[i];  // 0.5 s gap
  }
  CHECK(detect_utterances(buf).size() == 2);
}

TEST_CASE("vad bridges gaps shorter than 200 ms") {
  AudioBuffer buf;
  buf.samples.assign(40000, 0.0);
  const auto t = tone(8000, 300.0);
  for (std::size_t i = 0; i < 8000; ++i) {
    buf.samples[4000 + i] = t.samples[i];
    buf.samples[4000 + 8000 + 1600 + i] = t.samples[i];  // 0.1 s gap
  }
  CHECK(detect_utterances(buf).size() == 1);
}

TEST_CASE("utterances are sorted and disjoint") {
  auto buf = white_noise(64000, 3);
  // carve silences
  for (std::size_t i = 20000; i < 28000; ++i) buf.samples[i] = 0.0;
  for (std::size_t i = 44000; i < 52000; ++i) buf.samples[i] = 0.0;
  const auto utts = detect_utterances(buf);
  for (std::size_t i = 0; i < utts.size(); ++i) {
    CHECK(utts[i].end > utts[i].start);
    if (i > 0) CHECK(utts[i].start >= utts[i - 1].end);
  }
}

TEST_CASE("estimate_rtf identity gives unit response") {
  const auto outer = white_noise(16000, 5);
  const Utterance utt{0, outer.samples.size()};
  const auto est = estimate_rtf(outer, outer, utt);
  REQUIRE(est.response.size() == 129);
  for (std::size_t k = 0; k < est.response.size(); ++k) {
    if (est.degenerate[k]) continue;
    CHECK(std::abs(est.response[k] - cplx(1.0, 0.0)) < 1e-9);
  }
}

TEST_CASE("estimate_rtf scalar system gives flat 0.5") {
  const auto outer = white_noise(16000, 6);
  AudioBuffer inear = outer;
  for (auto& s : inear.samples) s *= 0.5;
  const auto est = estimate_rtf(inear, outer, Utterance{0, outer.samples.size()});
  for (std::size_t k = 0; k < est.response.size(); ++k) {
    if (est.degenerate[k]) continue;
    CHECK(std::abs(est.response[k] - cplx(0.5, 0.0)) < 1e-9);
  }
}

TEST_CASE("estimate_rtf errors") {
  const auto outer = white_noise(16000, 7);
  CHECK_THROWS(estimate_rtf(outer, outer, Utterance{0, 300}));  // < 2 frames
  AudioBuffer zeros;
  zeros.samples.assign(16000, 0.0);
  CHECK_THROWS(estimate_rtf(outer, zeros, Utterance{0, 16000}));
}

TEST_CASE("estimate_rtf scale covariance and common-scale invariance") {
  const auto outer = white_noise(8192, 8);
  const auto taps = lowpass_taps(48, 0.5);
  AudioBuffer inear = fir_convolve(outer, taps);
  const Utterance utt{0, outer.samples.size()};
  const auto base = estimate_rtf(inear, outer, utt);

  AudioBuffer inear3 = inear;
  for (auto& s : inear3.samples) s *= 3.0;
  const auto scaled = estimate_rtf(inear3, outer, utt);
  for (std::size_t k = 0; k < base.response.size(); ++k) {
    if (base.degenerate[k]) continue;
    CHECK(std::abs(scaled.response[k] - 3.0 * base.response[k]) <
          1e-9 * std::max(1.0, std::abs(base.response[k])));
  }

  AudioBuffer outer2 = outer;
  for (auto& s : outer2.samples) s *= 2.0;
  AudioBuffer inear2 = inear;
  for (auto& s : inear2.samples) s *= 2.0;
  const auto common = estimate_rtf(inear2, outer2, utt);
  for (std::size_t k = 0; k < base.response.size(); ++k) {
    if (base.degenerate[k]) continue;
    CHECK(std::abs(common.response[k] - base.response[k]) < 1e-9);
  }
}

TEST_CASE("system identification recovers a 64-tap lowpass") {
  const auto outer = white_noise(160000, 9);  // 10 s
  const auto taps = expo_lowpass_taps(64, 0.85);
  const AudioBuffer inear = fir_convolve(outer, taps);
  const auto est = estimate_rtf(inear, outer, Utterance{0, outer.samples.size()});
  const auto truth = taps_response(taps, 256);

  // |H| within 5% RMS over bins with gain above -40 dB
  double err2 = 0.0, ref2 = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double mag = std::abs(truth[k]);
    if (mag <= 0.01) continue;  // -40 dB
    const double d = std::abs(est.response[k]) - mag;
    err2 += d * d;
    ref2 += mag * mag;
  }
  CHECK(std::sqrt(err2 / ref2) < 0.05);

  // round trip through the impulse-response domain
  const auto reir = rtf_to_reir(est);
  REQUIRE(reir.taps.size() == 256);
  double tap_err2 = 0.0, tap_ref2 = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double t = i < taps.size() ? taps[i] : 0.0;
    tap_err2 += (reir.taps[i] - t) * (reir.taps[i] - t);
    tap_ref2 += t * t;
  }
  CHECK(tap_err2 / tap_ref2 < 1e-2);
}

TEST_CASE("rtf_to_reir closed forms") {
  RtfEstimate flat;
  flat.response.assign(129, cplx(1.0, 0.0));
  flat.degenerate.assign(129, false);
  const auto impulse = rtf_to_reir(flat);
  CHECK(std::abs(impulse.taps[0] - 1.0) < 1e-12);
  for (std::size_t i = 1; i < 256; ++i) CHECK(std::abs(impulse.taps[i]) < 1e-12);

  RtfEstimate half;
  half.response.assign(129, cplx(0.5, 0.0));
  half.degenerate.assign(129, false);
  const auto half_taps = rtf_to_reir(half);
  CHECK(std::abs(half_taps.taps[0] - 0.5) < 1e-12);
  for (std::size_t i = 1; i < 256; ++i) CHECK(std::abs(half_taps.taps[i]) < 1e-12);

  // pure delay via the shift theorem
  const std::size_t d = 17;
  RtfEstimate delay;
  delay.response.resize(129);
  delay.degenerate.assign(129, false);
  for (std::size_t k = 0; k < 129; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * d) / 256.0;
    delay.response[k] = cplx(std::cos(ang), std::sin(ang));
  }
  const auto delayed = rtf_to_reir(delay);
  for (std::size_t i = 0; i < 256; ++i)
    CHECK(std::abs(delayed.taps[i] - (i == d ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("rtf_to_reir rejects non-finite responses") {
  RtfEstimate bad;
  bad.response.assign(129, cplx(1.0, 0.0));
  bad.degenerate.assign(129, false);
  bad.response[4] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  CHECK_THROWS(rtf_to_reir(bad));
}

namespace {

TalkerUtteranceRtfs make_talker(const std::string& name,
                                const std::vector<double>& lengths_s) {
  TalkerUtteranceRtfs t;
  t.talker = name;
  for (double s : lengths_s) {
    RtfEstimate est;
    est.response.assign(129, cplx(1.0, 0.0));
    est.degenerate.assign(129, false);
    est.source_talker = name;
    est.n_frames = 10;
    t.estimates.emplace_back(est, static_cast<std::size_t>(s * 16000.0));
  }
  return t;
}

}  // namespace

TEST_CASE("selection rules") {
  const auto talker = make_talker("a", {0.8, 2.0, 1.5});

  const auto single =
      select_rtfs({talker}, RtfMode::kSingle, TalkerScope::kAll);
  REQUIRE(single.entries.size() == 1);

  const auto multi = select_rtfs({talker}, RtfMode::kMulti, TalkerScope::kAll);
  CHECK(multi.entries.size() == 2);  // the 2.0 s and 1.5 s utterances

  const auto three = select_rtfs(
      {make_talker("a", {1.2}), make_talker("b", {1.3}), make_talker("c", {1.4})},
      RtfMode::kSingle, TalkerScope::kAll);
  CHECK(three.entries.size() == 3);

  const auto scoped = select_rtfs(
      {make_talker("a", {1.2}), make_talker("b", {1.3})},
      RtfMode::kSingle, TalkerScope::kSingle);
  REQUIRE(scoped.entries.size() == 1);
  CHECK(scoped.entries[0].talker == "a");

  CHECK_THROWS(select_rtfs({make_talker("a", {0.5, 0.9})}, RtfMode::kMulti,
                           TalkerScope::kAll));
}

TEST_CASE("bank save/load round trip") {
  const auto outer = white_noise(32000, 12);
  const auto taps = lowpass_taps(32, 0.6);
  const AudioBuffer inear = fir_convolve(outer, taps);
  auto est = estimate_rtf(inear, outer, Utterance{0, outer.samples.size()});
  est.source_talker = "talker0";
  est.source_utterance = "utt0";
  auto reir = rtf_to_reir(est);

  ReirBank bank;
  bank.entries.push_back(reir);
  const auto dir =
      (std::filesystem::temp_directory_path() / "ovr_bank_test").string();
  std::filesystem::remove_all(dir);
  save_bank(bank, dir);
  const auto back = load_bank(dir);
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].talker == "talker0");
  CHECK(back.entries[0].utterance == "utt0");
  REQUIRE(back.entries[0].taps.size() == reir.taps.size());
  for (std::size_t i = 0; i < reir.taps.size(); ++i)
    CHECK(static_cast<float>(reir.taps[i]) ==
          static_cast<float>(back.entries[0].taps[i]));
}
