// src/metrics.cpp

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

#include "ovr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ovr/dsp.hpp"
#include "ovr/unet.hpp"

namespace ovr {

double lsd(const AudioBuffer& reference, const AudioBuffer& estimate,
           const LsdConfig& cfg) {
  if (reference.samples.size() != estimate.samples.size())
    throw std::invalid_argument("lsd: length mismatch");
  if (reference.samples.size() < cfg.frame_len)
    throw std::invalid_argument("lsd: signal shorter than one frame");
  StftConfig stft_cfg;
  stft_cfg.frame_len = cfg.frame_len;
  stft_cfg.hop = cfg.hop;
  stft_cfg.window = WindowType::kHann;
  const Spectrogram ref_spec = stft(reference, stft_cfg);
  const Spectrogram est_spec = stft(estimate, stft_cfg);
  const double log_scale = cfg.power_spectra ? 10.0 : 20.0;
  const std::size_t num_bins = ref_spec.num_bins();
  double acc = 0.0;
  for (std::size_t l = 0; l < ref_spec.num_frames(); ++l) {
    double frame_acc = 0.0;
    for (std::size_t k = 0; k < num_bins; ++k) {
      double ref_mag = std::abs(ref_spec.frames[l][k]);
      double est_mag = std::abs(est_spec.frames[l][k]);
      if (cfg.power_spectra) {
        ref_mag *= ref_mag;
        est_mag *= est_mag;
      }
      const double r = log_scale * std::log10((ref_mag + cfg.floor_eps) /
                                              (est_mag + cfg.floor_eps));
      frame_acc += r * r;
    }
    acc += std::sqrt(frame_acc / static_cast<double>(num_bins));
  }
  return acc / static_cast<double>(ref_spec.num_frames());
}

// ---------------------------------------------------------------------------
// STOI
// ---------------------------------------------------------------------------

namespace {

constexpr double kStoiEps = 2.220446049250313e-16;
constexpr int kStoiFs = 10000;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiFft = 512;
constexpr std::size_t kStoiBands = 15;
constexpr std::size_t kStoiSegLen = 30;  // 384 ms at 10 kHz, hop 128
constexpr double kStoiMinFreq = 150.0;
constexpr double kStoiBetaDb = -15.0;
constexpr double kStoiDynRange = 40.0;

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double x2 = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= x2 / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Octave-compatible rational resampler (Kaiser-windowed sinc, 60 dB
// rejection), 16 kHz -> 10 kHz.
std::vector<double> resample_16k_to_10k(const std::vector<double>& x) {
  constexpr int p = 5, q = 8;
  const double fc = 1.0 / (2.0 * std::max(p, q));
  const double rejection_db = 60.0;
  const double roll_off = fc / 10.0;
  const int l = static_cast<int>(std::ceil(rejection_db / (28.714 * roll_off)));
  const double beta = 0.1102 * (rejection_db - 8.7);

  const int taps = 2 * l + 1;
  std::vector<double> h(taps);
  double sum = 0.0;
  const double i0b = bessel_i0(beta);
  for (int i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i - l);
    const double frac = t / static_cast<double>(l);
    const double kaiser = bessel_i0(beta * std::sqrt(1.0 - frac * frac)) / i0b;
    h[i] = kaiser * 2.0 * p * fc * sinc(2.0 * fc * t);
    sum += h[i];
  }
  for (auto& v : h) v = v / sum * static_cast<double>(p);

  const std::size_t n = x.size();
  const std::size_t n_out = (n * p + q - 1) / q;
  std::vector<double> out(n_out, 0.0);
  // out[j] = sum_i x[i] * h[j*q + l - i*p] evaluated at the upsampled rate
  for (std::size_t j = 0; j < n_out; ++j) {
    const long center = static_cast<long>(j) * q + l;
    double acc = 0.0;
    long i_min = (center - (taps - 1) + p - 1) / p;
    if (i_min < 0) i_min = 0;
    long i_max = center / p;
    if (i_max >= static_cast<long>(n)) i_max = static_cast<long>(n) - 1;
    for (long i = i_min; i <= i_max; ++i)
      acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(center - i * p)];
    out[j] = acc;
  }
  return out;
}

std::vector<double> stoi_window() {
  // Symmetric Hann of length kStoiFrame + 2 with the endpoints dropped.
  std::vector<double> w(kStoiFrame);
  for (std::size_t m = 0; m < kStoiFrame; ++m)
    w[m] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                static_cast<double>(m + 1) /
                                static_cast<double>(kStoiFrame + 1));
  return w;
}

std::vector<std::vector<double>> frame_signal(const std::vector<double>& x,
                                              const std::vector<double>& w) {
  std::vector<std::vector<double>> frames;
  if (x.size() < kStoiFrame + 1) return frames;
  for (std::size_t start = 0; start < x.size() - kStoiFrame;
       start += kStoiFrame / 2) {
    std::vector<double> f(kStoiFrame);
    for (std::size_t m = 0; m < kStoiFrame; ++m) f[m] = w[m] * x[start + m];
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<double> overlap_add_frames(
    const std::vector<std::vector<double>>& frames) {
  const std::size_t hop = kStoiFrame / 2;
  std::vector<double> out((frames.size() - 1) * hop + kStoiFrame, 0.0);
  for (std::size_t l = 0; l < frames.size(); ++l)
    for (std::size_t m = 0; m < kStoiFrame; ++m) out[l * hop + m] += frames[l][m];
  return out;
}

// One-third octave band matrix over the one-sided 512-point grid.
std::vector<std::vector<int>> third_octave_bands() {
  const std::size_t num_bins = kStoiFft / 2 + 1;
  std::vector<double> f(num_bins);
  for (std::size_t i = 0; i < num_bins; ++i)
    f[i] = static_cast<double>(kStoiFs) * static_cast<double>(i) /
           static_cast<double>(kStoiFft);
  auto nearest_bin = [&](double target) {
    std::size_t best = 0;
    double best_d = std::abs(f[0] - target);
    for (std::size_t i = 1; i < num_bins; ++i) {
      const double d = std::abs(f[i] - target);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  std::vector<std::vector<int>> bands(kStoiBands);
  for (std::size_t j = 0; j < kStoiBands; ++j) {
    const double lo = kStoiMinFreq * std::pow(2.0, (2.0 * j - 1.0) / 6.0);
    const double hi = kStoiMinFreq * std::pow(2.0, (2.0 * j + 1.0) / 6.0);
    const std::size_t lo_bin = nearest_bin(lo);
    const std::size_t hi_bin = nearest_bin(hi);
    for (std::size_t i = lo_bin; i < hi_bin; ++i)
      bands[j].push_back(static_cast<int>(i));
  }
  return bands;
}

// Third-octave band magnitudes, bands x frames.
std::vector<std::vector<double>> band_decompose(
    const std::vector<std::vector<double>>& frames,
    const std::vector<std::vector<int>>& bands) {
  std::vector<std::vector<double>> tob(bands.size(),
                                       std::vector<double>(frames.size()));
  std::vector<double> padded(kStoiFft);
  for (std::size_t l = 0; l < frames.size(); ++l) {
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(frames[l].begin(), frames[l].end(), padded.begin());
    const auto spec = rfft(padded);
    for (std::size_t j = 0; j < bands.size(); ++j) {
      double e = 0.0;
      for (int bin : bands[j]) e += std::norm(spec[static_cast<std::size_t>(bin)]);
      tob[j][l] = std::sqrt(e);
    }
  }
  return tob;
}

}  // namespace

double stoi(const AudioBuffer& reference, const AudioBuffer& estimate) {
  if (reference.samples.size() != estimate.samples.size())
    throw std::invalid_argument("stoi: length mismatch");
  const auto x10 = resample_16k_to_10k(reference.samples);
  const auto y10 = resample_16k_to_10k(estimate.samples);

  const auto w = stoi_window();
  auto x_frames = frame_signal(x10, w);
  auto y_frames = frame_signal(y10, w);
  if (x_frames.empty()) throw std::invalid_argument("stoi: signal too short");

  // Drop frames more than 40 dB below the loudest reference frame.
  std::vector<double> energies(x_frames.size());
  double max_energy = -1e30;
  for (std::size_t l = 0; l < x_frames.size(); ++l) {
    double e = 0.0;
    for (double v : x_frames[l]) e += v * v;
    energies[l] = 20.0 * std::log10(std::sqrt(e) + kStoiEps);
    max_energy = std::max(max_energy, energies[l]);
  }
  std::vector<std::vector<double>> x_kept, y_kept;
  for (std::size_t l = 0; l < x_frames.size(); ++l) {
    if (max_energy - kStoiDynRange - energies[l] < 0.0) {
      x_kept.push_back(std::move(x_frames[l]));
      y_kept.push_back(std::move(y_frames[l]));
    }
  }
  if (x_kept.empty()) throw std::invalid_argument("stoi: all-silent reference");

  const auto x_sil = overlap_add_frames(x_kept);
  const auto y_sil = overlap_add_frames(y_kept);
  const auto xf = frame_signal(x_sil, w);
  const auto yf = frame_signal(y_sil, w);
  if (xf.size() < kStoiSegLen)
    throw std::invalid_argument("stoi: too few active frames");

  const auto bands = third_octave_bands();
  const auto x_tob = band_decompose(xf, bands);
  const auto y_tob = band_decompose(yf, bands);

  const double clip = std::pow(10.0, -kStoiBetaDb / 20.0);
  const std::size_t num_segments = xf.size() - kStoiSegLen + 1;
  double corr_sum = 0.0;
  for (std::size_t m = 0; m < num_segments; ++m) {
    for (std::size_t j = 0; j < kStoiBands; ++j) {
      double x_norm = 0.0, y_norm = 0.0;
      for (std::size_t t = 0; t < kStoiSegLen; ++t) {
        x_norm += x_tob[j][m + t] * x_tob[j][m + t];
        y_norm += y_tob[j][m + t] * y_tob[j][m + t];
      }
      const double scale = std::sqrt(x_norm) / (std::sqrt(y_norm) + kStoiEps);
      double seg_x[kStoiSegLen], seg_y[kStoiSegLen];
      double mean_x = 0.0, mean_y = 0.0;
      for (std::size_t t = 0; t < kStoiSegLen; ++t) {
        seg_x[t] = x_tob[j][m + t];
        seg_y[t] = std::min(scale * y_tob[j][m + t], seg_x[t] * (1.0 + clip));
        mean_x += seg_x[t];
        mean_y += seg_y[t];
      }
      mean_x /= kStoiSegLen;
      mean_y /= kStoiSegLen;
      double nx = 0.0, ny = 0.0, dot = 0.0;
      for (std::size_t t = 0; t < kStoiSegLen; ++t) {
        seg_x[t] -= mean_x;
        seg_y[t] -= mean_y;
        nx += seg_x[t] * seg_x[t];
        ny += seg_y[t] * seg_y[t];
      }
      nx = std::sqrt(nx);
      ny = std::sqrt(ny);
      for (std::size_t t = 0; t < kStoiSegLen; ++t)
        dot += (seg_x[t] / (nx + kStoiEps)) * (seg_y[t] / (ny + kStoiEps));
      corr_sum += dot;
    }
  }
  return corr_sum / static_cast<double>(num_segments * kStoiBands);
}

// ---------------------------------------------------------------------------
// Evaluation driver
// ---------------------------------------------------------------------------

PairsManifest PairsManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("PairsManifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  PairsManifest m;
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs"))
      m.pairs.push_back({p.at("id").get<std::string>(),
                         p.at("input").get<std::string>(),
                         p.at("reference").get<std::string>()});
  } else if (j.contains("entries")) {
    // Corpus manifest: simulated signals are inputs, clean are targets.
    for (const auto& e : j.at("entries")) {
      const std::string clean = e.at("clean_path").get<std::string>();
      const std::string id =
          clean.substr(clean.find_last_of('/') + 1);
      m.pairs.push_back({id, e.at("simulated_path").get<std::string>(), clean});
    }
  } else {
    throw std::runtime_error("PairsManifest: unrecognized schema in " + path);
  }
  if (m.pairs.empty()) throw std::runtime_error("PairsManifest: empty manifest");
  return m;
}

void PairsManifest::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  auto& arr = j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : pairs)
    arr.push_back({{"id", p.id}, {"input", p.input_path}, {"reference", p.reference_path}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("PairsManifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

EvalReport evaluate_pairs(
    const PairsManifest& manifest, const Reconstructor* reconstructor,
    const std::string& condition_label,
    const std::vector<std::pair<std::string, double>>* pesq_scores) {
  if (manifest.pairs.empty())
    throw std::invalid_argument("evaluate_pairs: empty manifest");
  constexpr std::size_t kCutSamples = 10u * kPipelineSampleRate;
  EvalReport report;
  report.condition_label = condition_label;
  double pesq_acc = 0.0;
  std::size_t pesq_count = 0;
  for (const auto& pair : manifest.pairs) {
    AudioBuffer input = read_wav(pair.input_path);
    AudioBuffer reference = read_wav(pair.reference_path);
    const std::size_t cut = std::min(
        {input.samples.size(), reference.samples.size(), kCutSamples});
    input.samples.resize(cut);
    reference.samples.resize(cut);
    if (reconstructor) input = reconstructor->process(input);
    UtteranceScores scores;
    scores.id = pair.id;
    scores.lsd_db = lsd(reference, input);
    scores.stoi = stoi(reference, input);
    if (pesq_scores) {
      for (const auto& [id, val] : *pesq_scores) {
        if (id == pair.id) {
          scores.pesq_wb = val;
          pesq_acc += val;
          ++pesq_count;
          break;
        }
      }
    }
    report.mean_lsd_db += scores.lsd_db;
    report.mean_stoi += scores.stoi;
    report.per_utterance.push_back(std::move(scores));
  }
  const double n = static_cast<double>(report.per_utterance.size());
  report.mean_lsd_db /= n;
  report.mean_stoi /= n;
  if (pesq_count > 0) report.mean_pesq_wb = pesq_acc / pesq_count;
  return report;
}

void EvalReport::save_json(const std::string& path) const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["condition_label"] = condition_label;
  j["lsd_config"] = {{"frame_len", 2048}, {"hop", 1024}, {"window", "hann"},
                     {"floor_eps", 1e-10}, {"log_scale", "amplitude_20log10"}};
  auto& arr = j["per_utterance"] = nlohmann::ordered_json::array();
  for (const auto& u : per_utterance) {
    nlohmann::ordered_json ju{{"id", u.id}, {"lsd_db", u.lsd_db}, {"stoi", u.stoi}};
    if (u.pesq_wb) ju["pesq_wb"] = *u.pesq_wb;
    arr.push_back(std::move(ju));
  }
  j["means"] = {{"lsd_db", mean_lsd_db}, {"stoi", mean_stoi}};
  if (mean_pesq_wb) j["means"]["pesq_wb"] = *mean_pesq_wb;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("EvalReport: cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(28) << "Condition" << std::right << std::setw(10)
     << "LSD" << std::setw(10) << "STOI";
  if (mean_pesq_wb) os << std::setw(10) << "PESQ-WB";
  os << "\n";
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(28) << condition_label << std::right
     << std::setw(10) << mean_lsd_db << std::setw(10) << mean_stoi;
  if (mean_pesq_wb) os << std::setw(10) << *mean_pesq_wb;
  os << "\n";
  return os.str();
}

}  // namespace ovr
