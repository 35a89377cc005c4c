// src/simulate.cpp

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

#include "ovr/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ovr {

namespace {

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double s : x) p += s * s;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

// Circular extraction of `len` samples starting at `offset`.
AudioBuffer noise_segment(const AudioBuffer& noise, std::size_t len,
                          std::size_t offset) {
  AudioBuffer seg;
  seg.sample_rate_hz = noise.sample_rate_hz;
  seg.samples.resize(len);
  const std::size_t n = noise.samples.size();
  for (std::size_t i = 0; i < len; ++i)
    seg.samples[i] = noise.samples[(offset + i) % n];
  return seg;
}

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

double snr_scale(const AudioBuffer& speech, const AudioBuffer& noise,
                 double target_snr_db) {
  const double p_s = mean_power(speech.samples);
  const double p_v = mean_power(noise.samples);
  if (p_s == 0.0) throw std::invalid_argument("snr_scale: silent speech");
  if (p_v == 0.0) throw std::invalid_argument("snr_scale: silent noise");
  return std::sqrt(p_s / (p_v * std::pow(10.0, target_snr_db / 10.0)));
}

AudioBuffer simulate_inear(const AudioBuffer& clean, const ReIR& reir,
                           const AudioBuffer* noise, double snr_db,
                           std::size_t noise_offset) {
  AudioBuffer out = fir_convolve(clean, reir.taps);
  if (noise) {
    if (noise->samples.empty())
      throw std::invalid_argument("simulate_inear: empty noise");
    const AudioBuffer seg =
        noise_segment(*noise, clean.samples.size(), noise_offset);
    const double alpha = snr_scale(out, seg, snr_db);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      out.samples[i] += alpha * seg.samples[i];
  }
  return out;
}

CorpusManifest build_corpus(const std::string& speech_dir, const SimConfig& cfg,
                            const std::string& out_dir) {
  const auto speech_files = list_wavs(speech_dir);
  if (speech_files.empty())
    throw std::invalid_argument("build_corpus: no wav files in " + speech_dir);

  ReirBank bank = load_bank(cfg.bank_dir);
  if (bank.entries.empty())
    throw std::invalid_argument("build_corpus: empty ReIR bank");
  std::vector<std::size_t> bank_indices;
  if (cfg.talker_scope == TalkerScope::kSingle) {
    const std::string& talker = bank.entries.front().talker;
    for (std::size_t i = 0; i < bank.entries.size(); ++i)
      if (bank.entries[i].talker == talker) bank_indices.push_back(i);
  } else {
    for (std::size_t i = 0; i < bank.entries.size(); ++i) bank_indices.push_back(i);
  }

  std::vector<AudioBuffer> noises;
  for (const auto& f : cfg.noise_files) noises.push_back(read_wav(f));

  // All random draws happen here, sequentially, before any file is
  // written, so materialization order cannot affect the result.
  std::mt19937_64 rng(cfg.seed);
  struct Draw {
    std::size_t reir;
    std::size_t noise;
    std::size_t offset;
    double snr_db;
  };
  std::vector<Draw> draws(speech_files.size());
  std::uniform_int_distribution<std::size_t> reir_dist(0, bank_indices.size() - 1);
  std::uniform_real_distribution<double> snr_dist(cfg.snr_low_db, cfg.snr_high_db);
  for (auto& d : draws) {
    d.reir = bank_indices[reir_dist(rng)];
    if (!noises.empty()) {
      std::uniform_int_distribution<std::size_t> noise_dist(0, noises.size() - 1);
      d.noise = noise_dist(rng);
      std::uniform_int_distribution<std::size_t> offset_dist(
          0, noises[d.noise].samples.size() - 1);
      d.offset = offset_dist(rng);
      d.snr_db = snr_dist(rng);
    }
  }
  // Split assignment: seeded shuffle, first train_fraction goes to train.
  std::vector<std::size_t> order(speech_files.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t num_train = std::min(
      order.size() - (order.size() > 1 ? 1 : 0),
      static_cast<std::size_t>(std::lround(0.88 * static_cast<double>(order.size()))));
  std::vector<std::string> split(speech_files.size(), "val");
  for (std::size_t i = 0; i < num_train; ++i) split[order[i]] = "train";

  fs::create_directories(out_dir);
  CorpusManifest manifest;
  manifest.seed = cfg.seed;
  for (std::size_t i = 0; i < speech_files.size(); ++i) {
    const AudioBuffer clean = read_wav(speech_files[i]);
    const Draw& d = draws[i];
    const ReIR& reir = bank.entries[d.reir];
    AudioBuffer sim;
    CorpusEntry entry;
    if (noises.empty()) {
      sim = simulate_inear(clean, reir);
    } else {
      sim = simulate_inear(clean, reir, &noises[d.noise], d.snr_db, d.offset);
      entry.noise_id = fs::path(cfg.noise_files[d.noise]).stem().string();
      entry.snr_db = d.snr_db;
      entry.noise_offset = d.offset;
    }
    const std::string stem = fs::path(speech_files[i]).stem().string();
    const std::string sim_path = (fs::path(out_dir) / ("sim_" + stem + ".wav")).string();
    write_wav(sim_path, sim, WavFormat::kFloat32);
    entry.clean_path = speech_files[i];
    entry.simulated_path = sim_path;
    entry.reir_id = "reir_" + std::to_string(d.reir);
    entry.talker_id = reir.talker;
    entry.split = split[i];
    manifest.entries.push_back(std::move(entry));
  }
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

void CorpusManifest::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["train_fraction"] = train_fraction;
  auto& arr = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json je{{"clean_path", e.clean_path},
                              {"simulated_path", e.simulated_path},
                              {"reir_id", e.reir_id},
                              {"talker_id", e.talker_id},
                              {"split", e.split}};
    if (e.noise_id) {
      je["noise_id"] = *e.noise_id;
      je["snr_db"] = *e.snr_db;
      je["noise_offset"] = *e.noise_offset;
    }
    arr.push_back(std::move(je));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("CorpusManifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("CorpusManifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  CorpusManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.train_fraction = j.at("train_fraction").get<double>();
  for (const auto& je : j.at("entries")) {
    CorpusEntry e;
    e.clean_path = je.at("clean_path").get<std::string>();
    e.simulated_path = je.at("simulated_path").get<std::string>();
    e.reir_id = je.at("reir_id").get<std::string>();
    e.talker_id = je.at("talker_id").get<std::string>();
    e.split = je.at("split").get<std::string>();
    if (je.contains("noise_id")) {
      e.noise_id = je.at("noise_id").get<std::string>();
      e.snr_db = je.at("snr_db").get<double>();
      e.noise_offset = je.at("noise_offset").get<std::size_t>();
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace ovr
