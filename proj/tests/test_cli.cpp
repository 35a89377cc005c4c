// tests/test_cli.cpp

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

#include "ovr/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "ovr/dsp.hpp"
#include "ovr/metrics.hpp"
#include "ovr/simulate.hpp"

using namespace ovr;
namespace fs = std::filesystem;

namespace {

AudioBuffer speechlike(std::size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> raw(n);
  for (auto& s : raw) s = dist(rng);
  AudioBuffer out;
  out.samples.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    double g = 1.0;
    for (std::size_t j = 0; j < 32 && j <= i; ++j, g *= 0.8) acc += g * raw[i - j];
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 4.0 *
                                            static_cast<double>(i) / 16000.0);
    out.samples[i] = 0.1 * acc * env;
  }
  return out;
}

std::vector<double> expo_lowpass(std::size_t m, double a) {
  std::vector<double> taps(m);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    taps[i] = std::pow(a, static_cast<double>(i));
    sum += taps[i];
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Sandbox {
  fs::path root;
  explicit Sandbox(const std::string& name) {
    root = fs::temp_directory_path() / name;
    fs::remove_all(root);
    fs::create_directories(root);
  }
  std::string operator/(const std::string& rel) const {
    return (root / rel).string();
  }
};

}  // namespace

TEST_CASE("evaluate on identical pairs reports zero distance") {
  Sandbox sb("ovr_cli_eval");
  PairsManifest manifest;
  const auto buf = speechlike(32000, 1);
  write_wav(sb / "a.wav", buf, WavFormat::kFloat32);
  manifest.pairs.push_back({"a", sb / "a.wav", sb / "a.wav"});
  manifest.save(sb / "pairs.json");

  CHECK(dispatch({"evaluate", "--pairs", sb / "pairs.json", "--out",
                  sb / "report.json"}) == 0);
  std::ifstream in(sb / "report.json");
  nlohmann::json j;
  in >> j;
  CHECK(j.at("means").at("lsd_db").get<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(j.at("means").at("stoi").get<double>() > 0.99);
  CHECK(fs::exists(sb / "report.json.run.json"));
}

TEST_CASE("unknown flags and missing subcommands fail cleanly") {
  CHECK(dispatch({"no-such-command"}) != 0);
  CHECK(dispatch({"evaluate", "--bogus", "x"}) != 0);
  CHECK(dispatch({}) != 0);
}

TEST_CASE("simulate is deterministic and respects the overwrite guard") {
  Sandbox sb("ovr_cli_sim");
  fs::create_directories(sb / "speech");
  fs::create_directories(sb / "noise");
  for (int i = 0; i < 4; ++i)
    write_wav(sb / ("speech/u" + std::to_string(i) + ".wav"),
              speechlike(8000, 10 + i), WavFormat::kFloat32);
  write_wav(sb / "noise/n0.wav", speechlike(5000, 99), WavFormat::kFloat32);

  // build a one-entry bank from a synthetic pair
  const auto outer = [&] {
    AudioBuffer buf;
    buf.samples.assign(48000, 0.0);
    const auto burst = speechlike(32000, 20);
    for (std::size_t i = 0; i < burst.samples.size(); ++i)
      buf.samples[8000 + i] = burst.samples[i];
    return buf;
  }();
  const auto inear = fir_convolve(outer, expo_lowpass(64, 0.85));
  write_wav(sb / "outer.wav", outer, WavFormat::kFloat32);
  write_wav(sb / "inear.wav", inear, WavFormat::kFloat32);
  REQUIRE(dispatch({"estimate-rtf", "--inear", sb / "inear.wav", "--outer",
                    sb / "outer.wav", "--mode", "s-rtf", "--out",
                    sb / "bank"}) == 0);
  CHECK(fs::exists(sb / "bank/run.json"));

  const std::vector<std::string> sim_args{
      "simulate", "--speech", sb / "speech", "--bank", sb / "bank",
      "--noise",  sb / "noise", "--snr",    "10:60",  "--seed", "5",
      "--out",    sb / "corpus"};
  REQUIRE(dispatch(sim_args) == 0);
  const auto manifest1 = read_bytes(sb / "corpus/manifest.json");

  // refuses to clobber without --force
  CHECK(dispatch(sim_args) != 0);

  auto forced = sim_args;
  forced.insert(forced.begin(), "--force");
  REQUIRE(dispatch(forced) == 0);
  CHECK(read_bytes(sb / "corpus/manifest.json") == manifest1);
}

TEST_CASE("train detects strategy/corpus contradictions") {
  Sandbox sb("ovr_cli_contradict");
  fs::create_directories(sb / "speech");
  for (int i = 0; i < 2; ++i)
    write_wav(sb / ("speech/u" + std::to_string(i) + ".wav"),
              speechlike(6000, 30 + i), WavFormat::kFloat32);
  const auto outer = [&] {
    AudioBuffer buf;
    buf.samples.assign(48000, 0.0);
    const auto burst = speechlike(32000, 40);
    for (std::size_t i = 0; i < burst.samples.size(); ++i)
      buf.samples[8000 + i] = burst.samples[i];
    return buf;
  }();
  const auto inear = fir_convolve(outer, expo_lowpass(64, 0.85));
  write_wav(sb / "outer.wav", outer, WavFormat::kFloat32);
  write_wav(sb / "inear.wav", inear, WavFormat::kFloat32);
  REQUIRE(dispatch({"estimate-rtf", "--inear", sb / "inear.wav", "--outer",
                    sb / "outer.wav", "--out", sb / "bank"}) == 0);
  // no-noise corpus
  REQUIRE(dispatch({"simulate", "--speech", sb / "speech", "--bank", sb / "bank",
                    "--seed", "1", "--out", sb / "corpus"}) == 0);

  // s+ needs noise, s is fine; s+r additionally needs --real
  CHECK(dispatch({"train", "--corpus", sb / "corpus/manifest.json",
                  "--strategy", "s+", "--epochs", "0", "--out",
                  sb / "model_a"}) != 0);
  CHECK(dispatch({"train", "--corpus", sb / "corpus/manifest.json",
                  "--strategy", "s+r", "--epochs", "0", "--out",
                  sb / "model_b"}) != 0);
}

TEST_CASE("desk-scale pipeline runs end to end") {
  Sandbox sb("ovr_cli_e2e");

  // paired recording for the response estimate
  AudioBuffer outer;
  outer.samples.assign(56000, 0.0);
  const auto burst = speechlike(40000, 50);
  for (std::size_t i = 0; i < burst.samples.size(); ++i)
    outer.samples[8000 + i] = burst.samples[i];
  const auto inear = fir_convolve(outer, expo_lowpass(64, 0.85));
  write_wav(sb / "outer.wav", outer, WavFormat::kFloat32);
  write_wav(sb / "inear.wav", inear, WavFormat::kFloat32);
  REQUIRE(dispatch({"estimate-rtf", "--inear", sb / "inear.wav", "--outer",
                    sb / "outer.wav", "--mode", "s-rtf", "--out",
                    sb / "bank"}) == 0);
  CHECK(fs::exists(sb / "bank/bank.json"));

  // small corpus with noise
  fs::create_directories(sb / "speech");
  fs::create_directories(sb / "noise");
  for (int i = 0; i < 3; ++i)
    write_wav(sb / ("speech/u" + std::to_string(i) + ".wav"),
              speechlike(16000, 60 + i), WavFormat::kFloat32);
  write_wav(sb / "noise/n0.wav", speechlike(8000, 70), WavFormat::kFloat32);
  REQUIRE(dispatch({"simulate", "--speech", sb / "speech", "--bank", sb / "bank",
                    "--noise", sb / "noise", "--snr", "10:60", "--seed", "3",
                    "--out", sb / "corpus"}) == 0);

  // one epoch of the desk preset, then a decoder fine-tune pass
  REQUIRE(dispatch({"train", "--corpus", sb / "corpus/manifest.json", "--preset",
                    "desk", "--strategy", "s+r", "--real",
                    sb / "corpus/manifest.json", "--epochs", "1", "--batch", "2",
                    "--seed", "1", "--out", sb / "model"}) == 0);
  CHECK(fs::exists(sb / "model/model.bin"));
  CHECK(fs::exists(sb / "model/trainlog.jsonl"));
  CHECK(fs::exists(sb / "model/trainlog_finetune.jsonl"));
  CHECK(fs::exists(sb / "model/model.json"));
  CHECK(fs::exists(sb / "model/run.json"));

  // reconstruct one file
  REQUIRE(dispatch({"reconstruct", "--model", sb / "model", "--in",
                    sb / "speech/u0.wav", "--out", sb / "recon.wav"}) == 0);
  const auto recon = read_wav(sb / "recon.wav");
  CHECK(recon.samples.size() == 16000);
  CHECK(fs::exists(sb / "recon.wav.run.json"));
  // output overwrite guard
  CHECK(dispatch({"reconstruct", "--model", sb / "model", "--in",
                  sb / "speech/u0.wav", "--out", sb / "recon.wav"}) != 0);

  // score the corpus through the model
  REQUIRE(dispatch({"evaluate", "--pairs", sb / "corpus/manifest.json",
                    "--model", sb / "model", "--label", "processed", "--out",
                    sb / "report.json"}) == 0);
  std::ifstream in(sb / "report.json");
  nlohmann::json j;
  in >> j;
  CHECK(j.at("per_utterance").size() == 3);
  CHECK(j.at("condition_label").get<std::string>() == "processed");
}

TEST_CASE("train log is identical across reruns with one seed") {
  Sandbox sb("ovr_cli_det");
  fs::create_directories(sb / "speech");
  for (int i = 0; i < 3; ++i)
    write_wav(sb / ("speech/u" + std::to_string(i) + ".wav"),
              speechlike(8000, 80 + i), WavFormat::kFloat32);
  const auto outer = [&] {
    AudioBuffer buf;
    buf.samples.assign(48000, 0.0);
    const auto b = speechlike(32000, 90);
    for (std::size_t i = 0; i < b.samples.size(); ++i)
      buf.samples[8000 + i] = b.samples[i];
    return buf;
  }();
  write_wav(sb / "outer.wav", outer, WavFormat::kFloat32);
  write_wav(sb / "inear.wav", fir_convolve(outer, expo_lowpass(64, 0.85)),
            WavFormat::kFloat32);
  REQUIRE(dispatch({"estimate-rtf", "--inear", sb / "inear.wav", "--outer",
                    sb / "outer.wav", "--out", sb / "bank"}) == 0);
  REQUIRE(dispatch({"simulate", "--speech", sb / "speech", "--bank", sb / "bank",
                    "--seed", "2", "--out", sb / "corpus"}) == 0);

  const std::vector<std::string> base{
      "train", "--corpus", sb / "corpus/manifest.json", "--strategy", "s",
      "--epochs", "2", "--batch", "2", "--seed", "7"};
  auto first = base;
  first.push_back("--out");
  first.push_back(sb / "model1");
  auto second = base;
  second.push_back("--out");
  second.push_back(sb / "model2");
  REQUIRE(dispatch(first) == 0);
  REQUIRE(dispatch(second) == 0);
  CHECK(read_bytes(sb / "model1/trainlog.jsonl") ==
        read_bytes(sb / "model2/trainlog.jsonl"));
  CHECK(read_bytes(sb / "model1/model.bin") == read_bytes(sb / "model2/model.bin"));
}
