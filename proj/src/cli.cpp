// src/cli.cpp

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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "ovr/metrics.hpp"
#include "ovr/rtf.hpp"
#include "ovr/simulate.hpp"
#include "ovr/unet.hpp"

namespace fs = std::filesystem;

namespace ovr {

namespace {

std::size_t default_jobs() {
  if (const char* env = std::getenv("OVR_LAB_JOBS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

void require_fresh_dir(const std::string& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::runtime_error("output dir exists and is not empty: " + dir +
                             " (use --force to overwrite)");
  fs::create_directories(dir);
}

void require_fresh_file(const std::string& path, bool force) {
  if (fs::exists(path) && !force)
    throw std::runtime_error("output file exists: " + path +
                             " (use --force to overwrite)");
  if (fs::path(path).has_parent_path())
    fs::create_directories(fs::path(path).parent_path());
}

void write_run_record(const std::string& path, const std::string& subcommand,
                      const nlohmann::ordered_json& resolved) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["tool"] = "ovr";
  j["subcommand"] = subcommand;
  j["config"] = resolved;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::vector<std::string> list_dir_wavs(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------

int run_estimate_rtf(const std::vector<std::string>& inear_paths,
                     const std::vector<std::string>& outer_paths,
                     const std::string& mode_str, const std::string& out_dir,
                     bool force) {
  if (inear_paths.size() != outer_paths.size() || inear_paths.empty())
    throw std::runtime_error("estimate-rtf needs matching --inear/--outer pairs");
  const RtfMode mode = mode_str == "s-rtf" ? RtfMode::kSingle : RtfMode::kMulti;
  require_fresh_dir(out_dir, force);

  std::vector<TalkerUtteranceRtfs> per_talker;
  for (std::size_t t = 0; t < inear_paths.size(); ++t) {
    const AudioBuffer inear = read_wav(inear_paths[t]);
    const AudioBuffer outer = read_wav(outer_paths[t]);
    if (inear.samples.size() != outer.samples.size())
      throw std::runtime_error("estimate-rtf: channel length mismatch for " +
                               inear_paths[t]);
    TalkerUtteranceRtfs talker;
    talker.talker = fs::path(inear_paths[t]).stem().string();
    const auto utterances = detect_utterances(outer);
    if (utterances.empty())
      throw std::runtime_error("estimate-rtf: no voice activity in " +
                               outer_paths[t]);
    for (std::size_t u = 0; u < utterances.size(); ++u) {
      RtfEstimate est = estimate_rtf(inear, outer, utterances[u]);
      est.source_talker = talker.talker;
      est.source_utterance = "utt_" + std::to_string(u);
      talker.estimates.emplace_back(std::move(est), utterances[u].length());
    }
    per_talker.push_back(std::move(talker));
  }
  const ReirBank bank = select_rtfs(per_talker, mode, TalkerScope::kAll);
  save_bank(bank, out_dir);
  write_run_record((fs::path(out_dir) / "run.json").string(), "estimate-rtf",
                   {{"inear", inear_paths},
                    {"outer", outer_paths},
                    {"mode", mode_str},
                    {"out", out_dir},
                    {"num_reirs", bank.entries.size()}});
  std::cout << "wrote " << bank.entries.size() << " ReIRs to " << out_dir << "\n";
  return 0;
}

int run_simulate(const std::string& speech_dir, const std::string& bank_dir,
                 const std::string& talkers, const std::string& noise_dir,
                 const std::string& snr_range, uint64_t seed,
                 const std::string& out_dir, bool force) {
  SimConfig cfg;
  cfg.bank_dir = bank_dir;
  cfg.talker_scope = talkers == "1t" ? TalkerScope::kSingle : TalkerScope::kAll;
  cfg.seed = seed;
  if (!noise_dir.empty()) cfg.noise_files = list_dir_wavs(noise_dir);
  const auto colon = snr_range.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--snr must be LOW:HIGH, e.g. 10:60");
  cfg.snr_low_db = std::stod(snr_range.substr(0, colon));
  cfg.snr_high_db = std::stod(snr_range.substr(colon + 1));
  if (cfg.snr_low_db > cfg.snr_high_db)
    throw std::runtime_error("--snr low bound exceeds high bound");
  require_fresh_dir(out_dir, force);
  const CorpusManifest manifest = build_corpus(speech_dir, cfg, out_dir);
  write_run_record((fs::path(out_dir) / "run.json").string(), "simulate",
                   {{"speech", speech_dir},
                    {"bank", bank_dir},
                    {"talkers", talkers},
                    {"noise", noise_dir},
                    {"snr", snr_range},
                    {"seed", seed},
                    {"out", out_dir},
                    {"entries", manifest.entries.size()}});
  std::cout << "simulated " << manifest.entries.size() << " files into "
            << out_dir << "\n";
  return 0;
}

int run_train(const std::string& corpus_path, const std::string& preset,
              const std::string& strategy, const std::string& real_path,
              std::size_t epochs, std::size_t batch, double lr, uint64_t seed,
              std::size_t jobs, const std::string& out_dir, bool force) {
  const CorpusManifest corpus = CorpusManifest::load(corpus_path);
  const bool has_noise =
      !corpus.entries.empty() && corpus.entries.front().snr_db.has_value();
  if (strategy == "s" && has_noise)
    throw std::runtime_error("strategy s expects a corpus without noise");
  if ((strategy == "s+" || strategy == "s+r") && !has_noise)
    throw std::runtime_error("strategy " + strategy +
                             " expects a corpus simulated with noise");
  if (strategy == "s+r" && real_path.empty())
    throw std::runtime_error("strategy s+r requires --real <manifest>");
  require_fresh_dir(out_dir, force);

  const NetConfig net_cfg =
      preset == "paper" ? NetConfig::paper_preset() : NetConfig::desk_preset();
  TrainConfig train_cfg;
  train_cfg.max_epochs = epochs;
  train_cfg.batch_size = batch;
  train_cfg.lr0 = lr;
  train_cfg.seed = seed;
  train_cfg.jobs = jobs;

  const TrainingSet set = load_training_set(corpus);
  TrainResult result = train(set, net_cfg, train_cfg);
  result.log.strategy = strategy;

  if (strategy == "s+r") {
    const CorpusManifest real = CorpusManifest::load(real_path);
    const TrainingSet real_set = load_training_set(real);
    TrainConfig ft_cfg = train_cfg;
    ft_cfg.lr0 = TrainConfig{}.lr0;  // finetune_decoder swaps in 5e-5
    TrainResult ft = finetune_decoder(result.params, real_set, ft_cfg);
    ft.log.strategy = "s+r/finetune";
    ft.log.save_jsonl((fs::path(out_dir) / "trainlog_finetune.jsonl").string());
    result.params = std::move(ft.params);
  }

  result.params.save((fs::path(out_dir) / "model.bin").string());
  result.log.save_jsonl((fs::path(out_dir) / "trainlog.jsonl").string());
  nlohmann::ordered_json provenance{{"schema_version", 1},
                                    {"preset", preset},
                                    {"strategy", strategy},
                                    {"seed", seed},
                                    {"epochs_run", result.log.epochs.size()},
                                    {"corpus", corpus_path},
                                    {"real", real_path}};
  std::ofstream(fs::path(out_dir) / "model.json") << provenance.dump(2) << "\n";
  write_run_record((fs::path(out_dir) / "run.json").string(), "train",
                   {{"corpus", corpus_path},
                    {"preset", preset},
                    {"strategy", strategy},
                    {"real", real_path},
                    {"epochs", epochs},
                    {"batch", batch},
                    {"lr", lr},
                    {"seed", seed},
                    {"jobs", jobs},
                    {"out", out_dir}});
  std::cout << "trained " << result.log.epochs.size() << " epochs, model in "
            << out_dir << "\n";
  return 0;
}

int run_reconstruct(const std::string& model_dir, const std::string& in_path,
                    const std::string& out_path, bool force) {
  require_fresh_file(out_path, force);
  const NetworkParams params =
      NetworkParams::load((fs::path(model_dir) / "model.bin").string());
  const Reconstructor reconstructor(params);
  const AudioBuffer input = read_wav(in_path);
  const AudioBuffer output = reconstructor.process(input);
  write_wav(out_path, output, WavFormat::kFloat32);
  write_run_record(out_path + ".run.json", "reconstruct",
                   {{"model", model_dir}, {"in", in_path}, {"out", out_path}});
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_evaluate(const std::string& pairs_path, const std::string& model_dir,
                 const std::string& pesq_path, const std::string& label,
                 const std::string& out_path, bool force) {
  require_fresh_file(out_path, force);
  const PairsManifest manifest = PairsManifest::load(pairs_path);
  std::optional<Reconstructor> reconstructor;
  if (!model_dir.empty())
    reconstructor.emplace(
        NetworkParams::load((fs::path(model_dir) / "model.bin").string()));
  std::vector<std::pair<std::string, double>> pesq_scores;
  if (!pesq_path.empty()) {
    std::ifstream in(pesq_path);
    if (!in) throw std::runtime_error("cannot open PESQ score file " + pesq_path);
    nlohmann::json j;
    in >> j;
    for (const auto& [id, val] : j.items())
      pesq_scores.emplace_back(id, val.get<double>());
  }
  const std::string condition =
      !label.empty() ? label : (model_dir.empty() ? "unprocessed" : "processed");
  const EvalReport report =
      evaluate_pairs(manifest, reconstructor ? &*reconstructor : nullptr,
                     condition, pesq_scores.empty() ? nullptr : &pesq_scores);
  report.save_json(out_path);
  write_run_record(out_path + ".run.json", "evaluate",
                   {{"pairs", pairs_path},
                    {"model", model_dir},
                    {"pesq", pesq_path},
                    {"label", condition},
                    {"out", out_path}});
  std::cout << report.to_table();
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"own-voice reconstruction pipeline"};
  app.require_subcommand(1);

  bool force = false;
  std::size_t jobs = default_jobs();
  app.add_flag("--force", force, "overwrite existing outputs");
  app.add_option("--jobs", jobs, "worker thread cap");

  // estimate-rtf
  auto* rtf_cmd = app.add_subcommand("estimate-rtf",
                                     "estimate ReIRs from paired recordings");
  std::vector<std::string> inear_paths, outer_paths;
  std::string rtf_mode = "s-rtf", rtf_out;
  rtf_cmd->add_option("--inear", inear_paths, "in-ear recording (repeatable)")
      ->required();
  rtf_cmd->add_option("--outer", outer_paths, "outer recording (repeatable)")
      ->required();
  rtf_cmd->add_option("--mode", rtf_mode, "s-rtf or m-rtf")
      ->check(CLI::IsMember({"s-rtf", "m-rtf"}));
  rtf_cmd->add_option("--out", rtf_out, "output bank directory")->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "materialize a simulated corpus");
  std::string sim_speech, sim_bank, sim_talkers = "all", sim_noise, sim_snr = "10:60",
              sim_out;
  uint64_t sim_seed = 0;
  sim_cmd->add_option("--speech", sim_speech, "clean speech directory")->required();
  sim_cmd->add_option("--bank", sim_bank, "ReIR bank directory")->required();
  sim_cmd->add_option("--talkers", sim_talkers, "1t or all")
      ->check(CLI::IsMember({"1t", "all"}));
  sim_cmd->add_option("--noise", sim_noise, "body-noise directory (omit for no noise)");
  sim_cmd->add_option("--snr", sim_snr, "SNR range LOW:HIGH in dB");
  sim_cmd->add_option("--seed", sim_seed, "RNG seed");
  sim_cmd->add_option("--out", sim_out, "output corpus directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the reconstruction network");
  std::string train_corpus, train_preset = "desk", train_strategy = "s+",
              train_real, train_out;
  std::size_t train_epochs = 100, train_batch = 32;
  double train_lr = 1e-4;
  uint64_t train_seed = 0;
  train_cmd->add_option("--corpus", train_corpus, "corpus manifest")->required();
  train_cmd->add_option("--preset", train_preset, "paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  train_cmd->add_option("--strategy", train_strategy, "r, s, s+ or s+r")
      ->check(CLI::IsMember({"r", "s", "s+", "s+r"}));
  train_cmd->add_option("--real", train_real, "real-pair manifest for s+r fine-tune");
  train_cmd->add_option("--epochs", train_epochs, "epoch cap");
  train_cmd->add_option("--batch", train_batch, "batch size");
  train_cmd->add_option("--lr", train_lr, "initial learning rate");
  train_cmd->add_option("--seed", train_seed, "RNG seed");
  train_cmd->add_option("--out", train_out, "output model directory")->required();

  // reconstruct
  auto* rec_cmd = app.add_subcommand("reconstruct", "process a wav through a model");
  std::string rec_model, rec_in, rec_out;
  rec_cmd->add_option("--model", rec_model, "model directory")->required();
  rec_cmd->add_option("--in", rec_in, "input wav")->required();
  rec_cmd->add_option("--out", rec_out, "output wav")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score (input, reference) pairs");
  std::string eval_pairs, eval_model, eval_pesq, eval_label, eval_out;
  eval_cmd->add_option("--pairs", eval_pairs, "pairs or corpus manifest")->required();
  eval_cmd->add_option("--model", eval_model, "model directory (omit for unprocessed)");
  eval_cmd->add_option("--pesq", eval_pesq, "external PESQ-WB score file (id -> MOS)");
  eval_cmd->add_option("--label", eval_label, "condition label for the report");
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();

  std::vector<const char*> argv;
  argv.push_back("ovr");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (rtf_cmd->parsed())
      return run_estimate_rtf(inear_paths, outer_paths, rtf_mode, rtf_out, force);
    if (sim_cmd->parsed())
      return run_simulate(sim_speech, sim_bank, sim_talkers, sim_noise, sim_snr,
                          sim_seed, sim_out, force);
    if (train_cmd->parsed())
      return run_train(train_corpus, train_preset, train_strategy, train_real,
                       train_epochs, train_batch, train_lr, train_seed, jobs,
                       train_out, force);
    if (rec_cmd->parsed()) return run_reconstruct(rec_model, rec_in, rec_out, force);
    if (eval_cmd->parsed())
      return run_evaluate(eval_pairs, eval_model, eval_pesq, eval_label,
                          eval_out, force);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

}  // namespace ovr
